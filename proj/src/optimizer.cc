#include "hara/optimizer.h"

#include <cmath>
#include <limits>
#include <string>

#include "hara/error.h"

namespace hara {
namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-30;
constexpr int kBisectionIterations = 400;
constexpr double kRunawayGain = 1e-8;
constexpr int kPolishSteps = 3;

void check_inputs(const BranchWeights& node, double tol) {
  if (!(tol > 0.0)) throw ValidationError("solver tolerance must be positive");
  if (node.weights.size() != node.increments.cols()) {
    throw ValidationError("one weight per branch required");
  }
  if (!node.weights.allFinite() || !node.increments.allFinite()) {
    throw ValidationError("solver inputs must be finite");
  }
  if ((node.weights.array() <= 0.0).any()) throw ValidationError("branch weights must be positive");
}

// Everything the Newton iteration needs at one point. The merit function is
// the Box-Cox form -sum w ((1+theta'x)^p - 1)/p (-sum w log(1+theta'x) for
// p = 0); it is convex for every p < 1 and its gradient is -residual.
struct Evaluation {
  bool feasible = false;
  double margin = 0.0;
  double merit = 0.0;
  Vector residual;
  Matrix hessian;  // of the merit
  double objective = 0.0;
};

Evaluation evaluate(const BranchWeights& node, double p, const Vector& theta, bool want_hessian) {
  Evaluation ev;
  const Eigen::Index d = node.increments.rows();
  const Vector gross = (Vector::Ones(node.increments.cols()).transpose() +
                        theta.transpose() * node.increments).transpose();
  ev.margin = gross.size() ? gross.minCoeff() : 1.0;
  if (!(ev.margin > 0.0)) return ev;
  ev.feasible = true;
  ev.residual = Vector::Zero(d);
  if (want_hessian) ev.hessian = Matrix::Zero(d, d);
  double merit = 0.0;
  double objective = 0.0;
  for (Eigen::Index b = 0; b < gross.size(); ++b) {
    const double g = gross(b);
    const double w = node.weights(b);
    const double lg = std::log(g);
    const double g_pm1 = std::exp((p - 1.0) * lg);
    ev.residual += w * g_pm1 * node.increments.col(b);
    if (want_hessian) {
      ev.hessian += (w * (1.0 - p) * g_pm1 / g) * node.increments.col(b) * node.increments.col(b).transpose();
    }
    if (p == 0.0) {
      merit -= w * lg;
      objective += w * lg;
    } else {
      merit -= w * std::expm1(p * lg) / p;
      objective += w * std::exp(p * lg);
    }
  }
  ev.merit = merit;
  ev.objective = objective;
  return ev;
}

int increment_rank(const Matrix& x) {
  if (x.cols() == 0) return 0;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  cod.setThreshold(1e-12);
  return static_cast<int>(cod.rank());
}

void finish(NodeSolution& sol, const BranchWeights& node, double p, const SolverOptions& options,
            bool diverged) {
  const Evaluation ev = evaluate(node, p, sol.theta_hat, false);
  sol.margin = ev.margin;
  if (ev.feasible) {
    sol.foc_residual = ev.residual.norm();
    sol.objective_value = ev.objective;
  } else {
    sol.foc_residual = std::numeric_limits<double>::infinity();
    sol.objective_value = std::numeric_limits<double>::quiet_NaN();
  }
  sol.converged = ev.feasible && sol.foc_residual <= options.tol;
  sol.boundary_flag = diverged || !ev.feasible || sol.margin < options.interior_margin;
  // At a true root sum w (theta'x) g^(p-1) = 0, so theta'x takes both signs
  // unless it vanishes. One-signed gains mean the iterates ran along an
  // arbitrage ray, where the residual decays without a root.
  const Vector gains = (sol.theta_hat.transpose() * node.increments).transpose();
  if (gains.size() && gains.minCoeff() >= 0.0 && gains.maxCoeff() > kRunawayGain) sol.boundary_flag = true;
}

// Scalar fallback: the residual is strictly decreasing on the open interval,
// +inf at the lower end and -inf at the upper end, so bisection brackets the root.
double bisect_scalar(const BranchWeights& node, double p, double lower, double upper) {
  auto residual = [&](double t) {
    Vector th = Vector::Constant(1, t);
    const Evaluation ev = evaluate(node, p, th, false);
    return ev.feasible ? ev.residual(0) : std::numeric_limits<double>::quiet_NaN();
  };
  double lo = lower;
  double hi = upper;
  for (int i = 0; i < kBisectionIterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double r = residual(mid);
    if (std::isnan(r)) break;
    if (r > 0.0) {
      lo = mid;
    } else if (r < 0.0) {
      hi = mid;
    } else {
      return mid;
    }
  }
  return 0.5 * (lo + hi);
}

NodeSolution solve_foc(const BranchWeights& node, double p, const SolverOptions& options) {
  check_inputs(node, options.tol);
  const Eigen::Index d = node.increments.rows();
  NodeSolution sol;
  sol.theta_hat = Vector::Zero(d);

  if (node.increments.cols() == 0 || node.increments.cwiseAbs().maxCoeff() == 0.0) {
    sol.degenerate = true;
    finish(sol, node, p, options, false);
    return sol;
  }
  sol.redundant = increment_rank(node.increments) < d;

  Vector theta = Vector::Zero(d);
  Evaluation ev = evaluate(node, p, theta, true);
  bool diverged = false;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const double rnorm = ev.residual.norm();
    if (rnorm <= options.tol) break;

    // Newton direction on the merit: hessian * step = residual. The
    // pseudo-inverse keeps iterates in the span of the increments, which
    // yields the minimum-norm optimum when assets are redundant.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ev.hessian);
    Vector step = cod.solve(ev.residual);
    double slope = ev.residual.dot(step);
    if (!step.allFinite() || !(slope > 0.0)) {
      step = ev.residual;  // steepest descent
      slope = rnorm * rnorm;
    }

    bool accepted = false;
    for (double t = 1.0; t > kMinStep; t *= 0.5) {
      const Vector candidate = theta + t * step;
      Evaluation next = evaluate(node, p, candidate, true);
      if (!next.feasible) continue;
      const bool armijo = next.merit <= ev.merit - kArmijo * t * slope;
      if (armijo || next.residual.norm() < rnorm) {
        theta = candidate;
        ev = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (theta.norm() > options.divergence_norm) {
      diverged = true;
      ++it;
      break;
    }
  }
  // Polish: a few full Newton steps past the tolerance, kept only while the
  // residual keeps shrinking. Identities downstream are sensitive to
  // theta' residual.
  if (!diverged && ev.feasible && ev.residual.norm() <= options.tol) {
    for (int k = 0; k < kPolishSteps; ++k) {
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ev.hessian);
      const Vector candidate = theta + cod.solve(ev.residual);
      Evaluation next = evaluate(node, p, candidate, true);
      if (!candidate.allFinite() || !next.feasible || !(next.residual.norm() < ev.residual.norm())) break;
      theta = candidate;
      ev = std::move(next);
      ++it;
    }
  }
  sol.theta_hat = theta;
  sol.iterations = it;
  finish(sol, node, p, options, diverged);

  if (!sol.converged && !diverged && d == 1) {
    const AdmissibleSet set(node.increments);
    const auto interval = *set.interval();
    if (std::isfinite(interval.lower) && std::isfinite(interval.upper)) {
      NodeSolution alt = sol;
      alt.theta_hat = Vector::Constant(1, bisect_scalar(node, p, interval.lower, interval.upper));
      alt.iterations = sol.iterations + kBisectionIterations;
      finish(alt, node, p, options, false);
      if (alt.foc_residual < sol.foc_residual) sol = alt;
    }
  }
  return sol;
}

BranchWeights with_weights(const MarketTree& tree, NodeId id, std::span<const double> weights) {
  BranchWeights node = node_branches(tree, id);
  if (static_cast<Eigen::Index>(weights.size()) != node.weights.size()) {
    throw ValidationError("one weight per branch required at node " + std::to_string(id));
  }
  node.weights = Eigen::Map<const Vector>(weights.data(), node.weights.size());
  return node;
}

void check_binomial(double xi_u, double xi_d, double s_prev, double q_up) {
  if (!(xi_d > 0.0 && xi_d < 1.0 && xi_u > 1.0)) {
    throw ValidationError("binomial step needs 0 < xi_d < 1 < xi_u");
  }
  if (!(s_prev > 0.0)) throw ValidationError("binomial step needs a positive price");
  if (!(q_up > 0.0 && q_up < 1.0)) throw ValidationError("binomial step needs 0 < q_up < 1");
}

}  // namespace

Vector foc_residual(const BranchWeights& node, double p, const Vector& theta) {
  const Evaluation ev = evaluate(node, p, theta, false);
  if (!ev.feasible) throw DomainError("portfolio rate outside the admissible set");
  return ev.residual;
}

NodeSolution solve_power_foc(const BranchWeights& node, double p, const SolverOptions& options) {
  if (!(p < 1.0) || p == 0.0 || !std::isfinite(p)) {
    throw ValidationError("power solver needs p < 1, p != 0");
  }
  return solve_foc(node, p, options);
}

NodeSolution solve_power_foc(const MarketTree& tree, NodeId id, double p, std::span<const double> weights,
                             double tol) {
  SolverOptions options;
  options.tol = tol;
  return solve_power_foc(with_weights(tree, id, weights), p, options);
}

NodeSolution solve_log_foc(const BranchWeights& node, const SolverOptions& options) {
  return solve_foc(node, 0.0, options);
}

NodeSolution solve_log_foc(const MarketTree& tree, NodeId id, std::span<const double> weights, double tol) {
  SolverOptions options;
  options.tol = tol;
  return solve_log_foc(with_weights(tree, id, weights), options);
}

BinomialPowerSolution binomial_power_closed_form(double xi_u, double xi_d, double s_prev, double q_up,
                                                 double p) {
  check_binomial(xi_u, xi_d, s_prev, q_up);
  if (!(p < 1.0) || p == 0.0) throw ValidationError("power closed form needs p < 1, p != 0");
  const double up = xi_u - 1.0;
  const double down = 1.0 - xi_d;
  const double log_ratio = std::log(up * q_up) - std::log(down * (1.0 - q_up));
  // gamma = ratio^(1-q) with 1 - q = 1 / (1 - p).
  const double log_gamma = log_ratio / (1.0 - p);
  const double gamma = std::exp(log_gamma);

  BinomialPowerSolution out;
  out.gamma = gamma;
  double log_den;
  if (log_gamma <= 0.0) {
    out.theta_hat = (gamma - 1.0) / ((up + gamma * down) * s_prev);
    log_den = std::log(up + gamma * down);
  } else {
    const double inv = std::exp(-log_gamma);
    out.theta_hat = (1.0 - inv) / ((up * inv + down) * s_prev);
    log_den = log_gamma + std::log(up * inv + down);
  }
  const double log_spread = std::log(xi_u - xi_d);
  out.log_gross_up = log_gamma + log_spread - log_den;
  out.log_gross_down = log_spread - log_den;
  return out;
}

double binomial_power_closed_form_residual(double xi_u, double xi_d, double s_prev, double q_up, double p) {
  const BinomialPowerSolution sol = binomial_power_closed_form(xi_u, xi_d, s_prev, q_up, p);
  return q_up * (xi_u - 1.0) * s_prev * std::exp((p - 1.0) * sol.log_gross_up) +
         (1.0 - q_up) * (xi_d - 1.0) * s_prev * std::exp((p - 1.0) * sol.log_gross_down);
}

double binomial_log_closed_form(double xi_u, double xi_d, double s_prev, double q_up) {
  check_binomial(xi_u, xi_d, s_prev, q_up);
  return ((xi_u - 1.0) * q_up - (1.0 - xi_d) * (1.0 - q_up)) / ((xi_u - 1.0) * (1.0 - xi_d) * s_prev);
}

double binomial_log_growth(double xi_u, double xi_d, double q_up) {
  check_binomial(xi_u, xi_d, 1.0, q_up);
  return q_up * std::log(q_up * (xi_u - xi_d) / (1.0 - xi_d)) +
         (1.0 - q_up) * std::log((1.0 - q_up) * (xi_u - xi_d) / (xi_u - 1.0));
}

}  // namespace hara
