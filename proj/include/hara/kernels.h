#pragma once

#include <span>
#include <utility>
#include <vector>

#include "hara/extended_real.h"
#include "hara/tree_market.h"

namespace hara {

// Risk-aversion exponent p < 1 and its conjugate q = p / (p - 1).
// p = 0 is the logarithmic case.
class RiskAversion {
 public:
  enum class Kind { kPower, kLog };

  // Throws ValidationError unless p < 1 and p is finite.
  static RiskAversion FromP(double p);
  static RiskAversion Log() { return FromP(0.0); }

  double p() const { return p_; }
  double q() const { return q_; }
  Kind kind() const { return kind_; }
  bool is_log() const { return kind_ == Kind::kLog; }
  // sign(p); +1 for the log case, whose coefficient D_hat is positive.
  double sign() const { return p_ < 0.0 ? -1.0 : 1.0; }

 private:
  RiskAversion(double p, double q, Kind k) : p_(p), q_(q), kind_(k) {}
  double p_;
  double q_;
  Kind kind_;
};

// Hellinger integrand f_q:
//   ((1+x)^q - 1 - q x) / (q (q-1))   q not in {0, 1}, x > -1
//   x - log(1+x)                      q = 0,           x > -1
//   (1+x) log(1+x) - x                q = 1,           x >= -1
//   +inf                              otherwise.
ExtendedReal f_q(double q, double x);

// K_p(y) = y (1 - (1+y)^(p-1)) for y > -1, +inf for y <= -1.
ExtendedReal k_p(double p, double y);

// Discrete Levy-type measure: weighted jump sizes.
struct DiscreteMeasure {
  std::vector<double> weights;
  std::vector<Vector> jumps;
};

// lambda' b / (p-1) + lambda' c lambda / 2 + sum_i w_i f_p(lambda' x_i).
ExtendedReal phi_p(double p, const Vector& b, const Matrix& c, const DiscreteMeasure& f,
                   const Vector& lambda);

// One-step branch data of a node: increments (d x k) and weights (k) that are
// positive and sum to 1.
struct BranchWeights {
  Matrix increments;
  Vector weights;
};

// Node data under the tree's own probabilities.
BranchWeights node_branches(const MarketTree& tree, NodeId id);
// Node data with branch probabilities multiplied by `child_values` (sign
// ignored) and renormalised, e.g. the D(j)-weighted measure of a backward step.
BranchWeights node_branches(const MarketTree& tree, NodeId id, const AdaptedProcess& child_values);

// Per-node power objective, oriented for minimisation:
//   -sign(p) * sum_b w_b (1 + lambda' x_b)^p
// Convex on the admissible set. For p < 0 it is +inf on and beyond the
// boundary; for 0 < p < 1 it extends continuously to the closure and is +inf
// outside it.
ExtendedReal psi_power(const BranchWeights& node, double p, const Vector& lambda);
ExtendedReal psi_power(const MarketTree& tree, NodeId id, double p, std::span<const double> weights,
                       const Vector& lambda);
// Gradient of psi_power at an interior point: -|p| sum_b w_b x_b (1+lambda'x_b)^(p-1).
Vector psi_power_gradient(const BranchWeights& node, double p, const Vector& lambda);

// sum_b w_b log(1 + lambda' x_b), -inf off the open admissible set. Concave.
ExtendedReal y_log(const BranchWeights& node, const Vector& lambda);
ExtendedReal y_log(const MarketTree& tree, NodeId id, std::span<const double> weights,
                   const Vector& lambda);

// W(node) = x0 * prod over the path of (1 + theta' dS). Throws DomainError if
// wealth is not strictly positive somewhere.
AdaptedProcess wealth_process(double x0, const PredictableProcess& theta, const MarketTree& tree);

// pi = x0 * (running wealth factor at the node) * theta.
PredictableProcess rate_to_portfolio(double x0, const PredictableProcess& theta, const MarketTree& tree);

// theta = pi / (x0 + (pi . S) up to the node). Throws DomainError unless
// x0 + pi . S stays positive at every node, leaves included.
PredictableProcess portfolio_to_rate(double x0, const PredictableProcess& pi, const MarketTree& tree);

}  // namespace hara
