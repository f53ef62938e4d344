#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hara/forward_synthesis.h"
#include "hara/tree_market.h"

namespace hara {

// U(node, x) = D(node) x^p(node) or D_hat(node) log x + D_bar(node). The
// exponent may vary from node to node (adversarial fields for the constancy
// refuter); synthesized fields have a constant one.
class RandomFieldUtility {
 public:
  enum class Kind { kPower, kLog };

  static RandomFieldUtility Power(AdaptedProcess d, AdaptedProcess p);
  static RandomFieldUtility Power(AdaptedProcess d, double p);
  static RandomFieldUtility Log(AdaptedProcess d_hat, AdaptedProcess d_bar);
  static RandomFieldUtility FromResult(const ForwardUtilityResult& result);

  Kind kind() const { return kind_; }
  std::size_t size() const { return first_.size(); }
  // x > 0.
  double operator()(NodeId id, double x) const;

  // D (power) or D_hat (log).
  const AdaptedProcess& coefficient() const { return first_; }
  // p process (power) or D_bar (log).
  const AdaptedProcess& second() const { return second_; }

  // Checks strict monotonicity and strict concavity on x in {0.25, 0.5, 1, 2, 4}
  // at every node; returns a description of the first failure.
  std::optional<std::string> utility_gate() const;

 private:
  RandomFieldUtility(Kind k, AdaptedProcess a, AdaptedProcess b)
      : kind_(k), first_(std::move(a)), second_(std::move(b)) {}
  Kind kind_;
  AdaptedProcess first_;
  AdaptedProcess second_;
};

// U * Z. Z must be positive with Z(0) = 1 and a martingale under the tree's
// probabilities within 1e-12 (ValidationError otherwise). The product is
// forward under `tree` iff U is forward under tree.reweighted(Z ratios).
RandomFieldUtility transform_under_density(const MarketTree& tree, const RandomFieldUtility& u,
                                           const AdaptedProcess& z);

// U frozen at the stopping nodes: every node at or below a stopping node takes
// that node's coefficients. Pair with MarketTree::stopped.
RandomFieldUtility stopped_utility(const MarketTree& tree, const RandomFieldUtility& u,
                                   std::span<const NodeId> stopping_nodes);

struct NodeVerification {
  NodeId node = 0;
  // max over x0 of |E[U(child, W)] - U(node, W)| / max(1, |U(node, W)|) along theta_hat.
  double martingale_error = 0.0;
  // max over strategies and x0 of (E[U(child, W)] - U(node, W)) / max(1, |U(node, W)|).
  double worst_violation = -std::numeric_limits<double>::infinity();
};

struct VerificationReport {
  double martingale_max_error = 0.0;
  NodeId martingale_worst_node = 0;
  // Positive means a violation.
  double supermartingale_worst_violation = -std::numeric_limits<double>::infinity();
  NodeId supermartingale_worst_node = 0;
  int strategies_tested = 0;
  std::vector<double> x0_list;
  // Per x0: internal nodes where the martingale check fails.
  std::vector<std::vector<NodeId>> martingale_fail_nodes;
  std::vector<NodeVerification> nodes;
  double tol_m = 1e-11;
  double tol_s = 1e-11;
  std::uint64_t seed = 0;
  bool utility_ok = true;
  std::string utility_message;
  bool pass = false;
};

// Martingale check along theta_hat at every internal node and every x0, and
// supermartingale check along n_random_strategies random predictable
// strategies (uniform on the admissible set shrunk by 0.95 toward 0) plus
// 0, theta_hat / 2 and 2 theta_hat (clipped into the shrunk set).
VerificationReport verify_forward(const MarketTree& tree, const RandomFieldUtility& u,
                                  const PredictableProcess& theta_hat, const std::vector<double>& x0_list,
                                  int n_random_strategies, std::uint64_t seed, double tol_m = 1e-11,
                                  double tol_s = 1e-11);

struct GridCheckReport {
  double worst_violation = -std::numeric_limits<double>::infinity();
  NodeId worst_node = 0;
  double worst_theta = 0.0;
  int points_per_node = 0;
  bool violation_found(double tol) const { return worst_violation > tol; }
};

// One-asset trees only: at every internal node and wealth reached along
// theta_hat from each x0, evaluates the one-step supermartingale inequality on
// a uniform grid over the admissible interval shrunk by 0.95. For power and log
// fields with a constant exponent the inequality scales out of the wealth, so
// this covers the full product grid of strategies.
GridCheckReport exhaustive_grid_check(const MarketTree& tree, const RandomFieldUtility& u,
                                      const PredictableProcess& theta_hat, const std::vector<double>& x0_list,
                                      int points_per_node = 50);

struct NonconstantPCertificate {
  NodeId node = 0;
  double x = 0.0;
  // "null strategy": E[D(child) x^p(child)] > D(node) x^p(node).
  // "attainability": max over theta of E[D(child) (x g)^p(child)] < D(node) x^p(node),
  // so no strategy makes U a martingale from this node.
  std::string probe;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct NonconstantPReport {
  int probes = 0;
  std::vector<NonconstantPCertificate> certificates;
  bool violation_found() const { return !certificates.empty(); }
};

// Refuter for a power field with a node-varying exponent. Probes x = e^-k and
// e^k, k = 1..n_probes, plus n_probes seeded log-uniform points in
// [e^-n_probes, e^n_probes]. An empty report is not a proof of constancy.
NonconstantPReport detect_nonconstant_p(const MarketTree& tree, const AdaptedProcess& d,
                                        const AdaptedProcess& p_process, int n_probes, std::uint64_t seed);

}  // namespace hara
