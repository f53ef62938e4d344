#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hara/forward_synthesis.h"
#include "hara/kernels.h"
#include "hara/tree_market.h"

namespace hara {

// Strictly positive martingale Z with Z(0) = 1, stored through its one-step
// ratios Z(node) / Z(parent). The martingale property refers to the branch
// probabilities of the tree it was built against.
class DensityProcess {
 public:
  DensityProcess() = default;

  // `ratios` is indexed by node id; the root entry is ignored. Throws
  // ValidationError unless every ratio is positive and
  // |sum_children prob * ratio - 1| <= tol at every internal node.
  static DensityProcess FromRatios(const MarketTree& tree, std::vector<double> ratios, double tol = 1e-12);
  static DensityProcess Unit(const MarketTree& tree);

  double ratio(NodeId id) const { return ratios_[id]; }
  double value(NodeId id) const { return values_[id]; }
  const std::vector<double>& ratios() const { return ratios_; }
  const AdaptedProcess& values() const { return values_; }
  std::size_t size() const { return ratios_.size(); }

 private:
  std::vector<double> ratios_;
  AdaptedProcess values_;
};

// Largest |sum_children prob * ratio - 1| over internal nodes.
double martingale_defect(const MarketTree& tree, const std::vector<double>& ratios);

struct HellingerIncrements {
  double q = 0.0;
  // Per node: the increment carried on the step to its children (internal
  // nodes only; zero at leaves).
  AdaptedProcess increments;
  // Per node: sum of the increments of its strict ancestors (h at that time).
  AdaptedProcess cumulative;
};

enum class HellingerView {
  // E_P[(1 + dN_base) f_q(dN)]: base-weighted integrand under the tree's own
  // probabilities.
  kWeightedUnderOriginal,
  // E_Q[f_q(dN)] with Q the base-reweighted tree.
  kUnderReweighted,
};

// Hellinger process of order q of Z. Without `base`, Z must be a martingale
// under the tree's probabilities; with `base`, Z must be a martingale under the
// tree reweighted by `base`.
HellingerIncrements hellinger_process(const MarketTree& tree, const DensityProcess& z, double q,
                                      const DensityProcess* base = nullptr,
                                      HellingerView view = HellingerView::kWeightedUnderOriginal);

// Martingale density with ratios (1+theta'dS)^(p-1) / E[(1+theta'dS)^(p-1)]
// under the tree's probabilities; p = 0 gives the log case. Throws DomainError
// when theta is not interior at some node.
DensityProcess mhm_density_from_theta(const MarketTree& tree, const PredictableProcess& theta_hat, double p);

// Largest |sum_children prob * ratio * dS| over internal nodes.
double martingale_density_defect(const MarketTree& tree, const DensityProcess& z);

struct DominationNodeReport {
  NodeId node = 0;
  double candidate_increment = 0.0;
  double best_competitor_increment = 0.0;
  // min over competitors of (competitor - candidate); negative means a
  // competitor beat the candidate.
  double worst_margin = 0.0;
  int competitors = 0;
  // The candidate's ratios violate sum w r = 1 or sum w r x = 0 beyond 1e-10.
  bool candidate_invalid = false;
  bool skipped = false;
  std::string note;
};

struct DominationReport {
  double q = 0.0;
  double slack = 1e-12;
  double worst_margin = 0.0;
  int competitors_per_node = 0;
  std::vector<DominationNodeReport> nodes;
  bool pass = true;
};

// Samples `competitors` random martingale densities per node (exponential
// tilts of random log-ratios) and checks that the candidate's Hellinger
// increment is no larger than any competitor's, within `slack`. A candidate
// that is not itself a one-step martingale density fails at that node.
DominationReport verify_mhm_domination(const MarketTree& tree, const DensityProcess& z_tilde, double q,
                                       int competitors, std::uint64_t seed, double slack = 1e-12);

// Grid oracle over the whole family of one-step martingale densities at nodes
// with one or two free dimensions (branches - d - 1; two-dimensional grids are
// capped at 1000 points per axis). Nodes with more free
// dimensions are skipped and reported.
DominationReport grid_mhm_domination(const MarketTree& tree, const DensityProcess& z_tilde, double q,
                                     int points_per_dimension = 10000, double slack = 1e-12);

// D = D(0) * Z_D * exp(a_D) with Z_D the martingale of normalised one-step
// ratios and a_D the predictable sum of log E[D(j)/D(j-1) | F_{j-1}].
struct DoobDecomposition {
  DensityProcess z_d;
  // Same layout as ForwardUtilityResult::a_d.
  AdaptedProcess a_d;
};
DoobDecomposition doob_decomposition(const MarketTree& tree, const AdaptedProcess& d);

struct ReconstructionReport {
  // max over nodes of |D_rebuilt - D| / max(1, |D|).
  double max_error = 0.0;
  NodeId worst_node = 0;
  // max over internal nodes of the one-step factor identity
  // |(1 + q(q-1) dh)^(1-p) - E_Q[(1+theta'dS)^p]|.
  double max_step_identity_error = 0.0;
  // max over internal nodes of the discrepancy between the two Hellinger views.
  double max_view_discrepancy = 0.0;
  double max_density_defect = 0.0;
  double tolerance = 1e-10;
  bool pass = true;
  HellingerIncrements hellinger;
  DensityProcess z_tilde;
};

// Rebuilds D(j) = D(0) Z_D(j) prod_{k<=j} (1 + q(q-1) dh_k)^(p-1) from the
// minimal Hellinger martingale density of the Z_D-reweighted tree.
ReconstructionReport check_reconstruction_power(const MarketTree& tree, const ForwardUtilityResult& result,
                                                double tolerance = 1e-10);

struct LogIdentityReport {
  // |ratio - 1/(1+theta'dS)|, max over nodes.
  double ratio_error = 0.0;
  // |E_Q[log(1+theta'dS)] - dh^(0)|, max over internal nodes.
  double increment_error = 0.0;
  // |E_Q[D_bar/D_hat + H at children] - (D_bar/D_hat + H)|, max over internal nodes.
  double martingale_error = 0.0;
  double ratio_tolerance = 1e-12;
  double tolerance = 1e-11;
  bool pass = true;
  HellingerIncrements hellinger;
  DensityProcess z_tilde;
};

LogIdentityReport check_log_identity(const MarketTree& tree, const ForwardUtilityResult& result,
                                     double ratio_tolerance = 1e-12, double tolerance = 1e-11);

}  // namespace hara
