#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hara/kernels.h"
#include "hara/optimizer.h"
#include "hara/tree_market.h"

namespace hara {

// Risk aversion plus terminal data, one value per leaf in breadth-first order.
// Power: D(T) with p * D(T) > 0. Log: D_hat(T) > 0 and D_bar(T).
class HaraSpec {
 public:
  static HaraSpec Power(double p, std::vector<double> d_terminal);
  static HaraSpec Log(std::vector<double> d_hat_terminal, std::vector<double> d_bar_terminal);

  const RiskAversion& risk_aversion() const { return risk_aversion_; }
  bool is_log() const { return risk_aversion_.is_log(); }
  const std::vector<double>& d_terminal() const { return d_terminal_; }
  const std::vector<double>& d_hat_terminal() const { return d_hat_terminal_; }
  const std::vector<double>& d_bar_terminal() const { return d_bar_terminal_; }

 private:
  explicit HaraSpec(RiskAversion ra) : risk_aversion_(ra) {}
  RiskAversion risk_aversion_;
  std::vector<double> d_terminal_;
  std::vector<double> d_hat_terminal_;
  std::vector<double> d_bar_terminal_;
};

struct SynthesisOptions {
  SolverOptions solver;
  // When false a node whose solve is flagged (boundary or no convergence)
  // aborts synthesis with SolverError; when true the flagged optimum is used
  // and recorded in node_solutions.
  bool accept_flagged_nodes = false;
};

struct ForwardUtilityResult {
  RiskAversion risk_aversion = RiskAversion::FromP(0.5);
  // Power case.
  AdaptedProcess d;
  // Log case: D_hat, D_bar and the split of D_bar into martingale and
  // predictable parts (the predictable part is the running sum of
  // E[D_bar(j) - D_bar(j-1) | F_{j-1}], stored at the depth-j nodes).
  AdaptedProcess d_hat;
  AdaptedProcess d_bar;
  AdaptedProcess d_bar_martingale;
  AdaptedProcess d_bar_predictable;

  PredictableProcess theta_hat;
  // One entry per node; set at internal nodes only.
  std::vector<std::optional<NodeSolution>> node_solutions;
  // Multiplicative decomposition of the coefficient process (D, or D_hat for
  // log): coefficient = coefficient(0) * z_d * exp(a_d). a_d at a node of
  // depth j is the F_{j-1}-measurable sum of the first j log one-step drifts,
  // so it is shared by siblings.
  AdaptedProcess z_d;
  AdaptedProcess a_d;

  // Coefficient process multiplying x^p or log x.
  const AdaptedProcess& coefficient() const { return risk_aversion.is_log() ? d_hat : d; }
};

// Backward recursion for D(j) x^p: at each internal node solve the
// D(j)-weighted first-order condition, then D(j-1) = E[D(j)(1+theta'dS)^p].
ForwardUtilityResult synthesize_power(const MarketTree& tree, const HaraSpec& spec,
                                      const SynthesisOptions& options = {});
ForwardUtilityResult synthesize_power(const MarketTree& tree, const HaraSpec& spec, double tol);

// Backward recursion for D_hat(j) log x + D_bar(j): D_hat is the martingale
// closure of its terminal value, theta solves the D_hat-weighted log condition,
// and D_bar(j-1) = E[D_bar(j)] + E[D_hat(j) log(1+theta'dS)].
ForwardUtilityResult synthesize_log(const MarketTree& tree, const HaraSpec& spec,
                                    const SynthesisOptions& options = {});
ForwardUtilityResult synthesize_log(const MarketTree& tree, const HaraSpec& spec, double tol);

ForwardUtilityResult synthesize(const MarketTree& tree, const HaraSpec& spec,
                                const SynthesisOptions& options = {});

// Closed-form a_D of a binomial tree, evaluated from the per-step gamma and
// the D-weighted up-probability. Same layout as ForwardUtilityResult::a_d.
// Throws ValidationError on non-binomial trees (d != 1 or branching != 2).
AdaptedProcess binomial_a_d(const MarketTree& tree, const HaraSpec& spec, const ForwardUtilityResult& result);

}  // namespace hara
