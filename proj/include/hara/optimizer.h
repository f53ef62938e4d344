#pragma once

#include <span>

#include "hara/kernels.h"
#include "hara/tree_market.h"

namespace hara {

struct SolverOptions {
  // Target Euclidean norm of the first-order-condition residual.
  double tol = 1e-12;
  int max_iterations = 200;
  // A converged point closer than this to the boundary of the admissible set
  // is reported with boundary_flag.
  double interior_margin = 1e-10;
  // Iterates beyond this norm are treated as running off to infinity.
  double divergence_norm = 1e8;
};

struct NodeSolution {
  Vector theta_hat;
  // || sum_b w_b x_b (1 + theta' x_b)^(p-1) ||, with p = 0 for the log case.
  double foc_residual = 0.0;
  // sum_b w_b (1 + theta' x_b)^p (power) or sum_b w_b log(1 + theta' x_b) (log).
  double objective_value = 0.0;
  int iterations = 0;
  // min_b (1 + theta' x_b).
  double margin = 1.0;
  bool converged = false;
  // The iterates ran toward the boundary of the admissible set (or off to
  // infinity) instead of settling at an interior root.
  bool boundary_flag = false;
  // Every branch increment is zero; any theta is optimal and 0 is returned.
  bool degenerate = false;
  // The increments span fewer than d dimensions; theta_hat is the
  // minimum-norm optimum.
  bool redundant = false;

  bool ok() const { return converged && !boundary_flag; }
};

// Root of sum_b w_b x_b (1 + theta' x_b)^(p-1) = 0 over the interior of the
// admissible set, i.e. the optimal portfolio rate of a power investor whose
// one-step measure is `node.weights`. p < 1, p != 0.
NodeSolution solve_power_foc(const BranchWeights& node, double p, const SolverOptions& options = {});
NodeSolution solve_power_foc(const MarketTree& tree, NodeId id, double p,
                             std::span<const double> weights, double tol);

// Root of sum_b w_b x_b / (1 + theta' x_b) = 0; maximiser of y_log.
NodeSolution solve_log_foc(const BranchWeights& node, const SolverOptions& options = {});
NodeSolution solve_log_foc(const MarketTree& tree, NodeId id, std::span<const double> weights, double tol);

// Residual vector sum_b w_b x_b (1 + theta' x_b)^(p-1); p = 0 gives the log
// condition.
Vector foc_residual(const BranchWeights& node, double p, const Vector& theta);

struct BinomialPowerSolution {
  double theta_hat;
  double gamma;
  // log of the gross one-step returns 1 + theta_hat * dS on the up and down
  // branches, computed without cancellation.
  double log_gross_up;
  double log_gross_down;
};

// Up/down multipliers xi_u > 1 > xi_d > 0, price s_prev > 0, up-probability
// q_up in (0, 1) under the measure of the step, p < 1, p != 0.
BinomialPowerSolution binomial_power_closed_form(double xi_u, double xi_d, double s_prev, double q_up,
                                                 double p);

// The power first-order condition evaluated at the closed form through its
// exact gross returns.
double binomial_power_closed_form_residual(double xi_u, double xi_d, double s_prev, double q_up,
                                           double p);

double binomial_log_closed_form(double xi_u, double xi_d, double s_prev, double q_up);

// E[log(1 + theta_hat dS)] at the log optimum of a binomial step:
// Q log(Q (xi_u - xi_d) / (1 - xi_d)) + (1 - Q) log((1 - Q)(xi_u - xi_d) / (xi_u - 1)).
double binomial_log_growth(double xi_u, double xi_d, double q_up);

}  // namespace hara
