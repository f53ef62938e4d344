#include "hara/kernels.h"

#include <cmath>
#include <string>

#include "hara/error.h"

namespace hara {
namespace {

// Below this |x| (|q| + 2) the closed forms of f_q lose digits to
// cancellation; the Taylor series sum_{k>=2} x^k (q-2)(q-3)...(q-k+1)/k! is
// used instead.
constexpr double kSeriesCutoff = 1.0;
constexpr int kMaxSeriesTerms = 200;

double f_q_series(double q, double x) {
  double term = 0.5 * x * x;  // k = 2
  double sum = term;
  for (int k = 3; k < kMaxSeriesTerms; ++k) {
    term *= x * (q - (k - 1)) / k;
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace

RiskAversion RiskAversion::FromP(double p) {
  if (!std::isfinite(p) || !(p < 1.0)) {
    throw ValidationError("risk aversion needs a finite p < 1, got " + std::to_string(p));
  }
  if (p == 0.0) return RiskAversion(0.0, 0.0, Kind::kLog);
  return RiskAversion(p, p / (p - 1.0), Kind::kPower);
}

ExtendedReal f_q(double q, double x) {
  if (q == 1.0) {
    if (!(x >= -1.0)) return ExtendedReal::PlusInfinity();
    if (x == -1.0) return ExtendedReal::Finite(1.0);
  } else if (!(x > -1.0)) {
    return ExtendedReal::PlusInfinity();
  }
  if (std::abs(x) * (std::abs(q) + 2.0) < kSeriesCutoff) return ExtendedReal::Finite(f_q_series(q, x));
  if (q == 0.0) return ExtendedReal::Finite(x - std::log1p(x));
  if (q == 1.0) return ExtendedReal::Finite((1.0 + x) * std::log1p(x) - x);
  const double value = (std::expm1(q * std::log1p(x)) - q * x) / (q * (q - 1.0));
  if (std::isinf(value)) return ExtendedReal::PlusInfinity();
  return ExtendedReal::Finite(value);
}

ExtendedReal k_p(double p, double y) {
  if (!(y > -1.0)) return ExtendedReal::PlusInfinity();
  return ExtendedReal::Finite(-y * std::expm1((p - 1.0) * std::log1p(y)));
}

ExtendedReal phi_p(double p, const Vector& b, const Matrix& c, const DiscreteMeasure& f,
                   const Vector& lambda) {
  if (f.weights.size() != f.jumps.size()) throw ValidationError("measure weights and jumps differ in length");
  ExtendedReal total = ExtendedReal::Finite(lambda.dot(b) / (p - 1.0) + 0.5 * lambda.dot(c * lambda));
  for (std::size_t i = 0; i < f.weights.size(); ++i) {
    const ExtendedReal term = f_q(p, lambda.dot(f.jumps[i]));
    if (!term.is_finite()) return ExtendedReal::PlusInfinity();
    total = total + ExtendedReal::Finite(f.weights[i] * term.value());
  }
  return total;
}

BranchWeights node_branches(const MarketTree& tree, NodeId id) {
  if (tree.is_leaf(id)) throw ValidationError("node " + std::to_string(id) + " is a leaf");
  return {tree.branch_increments(id), tree.branch_probabilities(id)};
}

BranchWeights node_branches(const MarketTree& tree, NodeId id, const AdaptedProcess& child_values) {
  BranchWeights out = node_branches(tree, id);
  Eigen::Index b = 0;
  for (NodeId c : tree.children(id)) out.weights(b++) *= std::abs(child_values[c]);
  const double total = out.weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw ValidationError("cannot normalise branch weights at node " + std::to_string(id));
  }
  out.weights /= total;
  return out;
}

ExtendedReal psi_power(const BranchWeights& node, double p, const Vector& lambda) {
  const double sign = p < 0.0 ? -1.0 : 1.0;
  double acc = 0.0;
  for (Eigen::Index b = 0; b < node.increments.cols(); ++b) {
    const double gross = 1.0 + lambda.dot(node.increments.col(b));
    if (gross < 0.0) return ExtendedReal::PlusInfinity();
    if (gross == 0.0) {
      if (p < 0.0) return ExtendedReal::PlusInfinity();
      continue;
    }
    acc += node.weights(b) * std::pow(gross, p);
  }
  if (std::isinf(acc)) return ExtendedReal::PlusInfinity();
  return ExtendedReal::Finite(-sign * acc);
}

ExtendedReal psi_power(const MarketTree& tree, NodeId id, double p, std::span<const double> weights,
                       const Vector& lambda) {
  BranchWeights node = node_branches(tree, id);
  if (static_cast<Eigen::Index>(weights.size()) != node.weights.size()) {
    throw ValidationError("one weight per branch required");
  }
  node.weights = Eigen::Map<const Vector>(weights.data(), node.weights.size());
  return psi_power(node, p, lambda);
}

Vector psi_power_gradient(const BranchWeights& node, double p, const Vector& lambda) {
  Vector grad = Vector::Zero(node.increments.rows());
  for (Eigen::Index b = 0; b < node.increments.cols(); ++b) {
    const double gross = 1.0 + lambda.dot(node.increments.col(b));
    grad += node.weights(b) * std::pow(gross, p - 1.0) * node.increments.col(b);
  }
  return -std::abs(p) * grad;
}

ExtendedReal y_log(const BranchWeights& node, const Vector& lambda) {
  double acc = 0.0;
  for (Eigen::Index b = 0; b < node.increments.cols(); ++b) {
    const double gross = 1.0 + lambda.dot(node.increments.col(b));
    if (!(gross > 0.0)) return ExtendedReal::MinusInfinity();
    acc += node.weights(b) * std::log(gross);
  }
  return ExtendedReal::Finite(acc);
}

ExtendedReal y_log(const MarketTree& tree, NodeId id, std::span<const double> weights,
                   const Vector& lambda) {
  BranchWeights node = node_branches(tree, id);
  if (static_cast<Eigen::Index>(weights.size()) != node.weights.size()) {
    throw ValidationError("one weight per branch required");
  }
  node.weights = Eigen::Map<const Vector>(weights.data(), node.weights.size());
  return y_log(node, lambda);
}

AdaptedProcess wealth_process(double x0, const PredictableProcess& theta, const MarketTree& tree) {
  if (!(x0 > 0.0)) throw ValidationError("initial capital must be positive");
  AdaptedProcess w(tree.size());
  w[kRoot] = x0;
  for (NodeId id : tree.internal_nodes()) {
    const Vector& th = theta.at(id);
    for (NodeId c : tree.children(id)) {
      const double gross = 1.0 + th.dot(tree.node(c).delta_s);
      if (!(gross > 0.0)) {
        throw DomainError("portfolio rate at node " + std::to_string(id) +
                          " drives wealth non-positive on the branch to node " + std::to_string(c));
      }
      w[c] = w[id] * gross;
    }
  }
  return w;
}

PredictableProcess rate_to_portfolio(double x0, const PredictableProcess& theta, const MarketTree& tree) {
  const AdaptedProcess w = wealth_process(x0, theta, tree);
  PredictableProcess pi(tree);
  for (NodeId id : tree.internal_nodes()) pi.set(id, w[id] * theta.at(id));
  return pi;
}

PredictableProcess portfolio_to_rate(double x0, const PredictableProcess& pi, const MarketTree& tree) {
  if (!(x0 > 0.0)) throw ValidationError("initial capital must be positive");
  AdaptedProcess v(tree.size());
  v[kRoot] = x0;
  PredictableProcess theta(tree);
  for (NodeId id : tree.internal_nodes()) {
    const Vector& position = pi.at(id);
    theta.set(id, position / v[id]);
    for (NodeId c : tree.children(id)) {
      v[c] = v[id] + position.dot(tree.node(c).delta_s);
      if (!(v[c] > 0.0)) {
        throw DomainError("wealth x + pi.S is not positive at node " + std::to_string(c) +
                          " (path " + std::to_string(kRoot) + " -> " + std::to_string(c) + ")");
      }
    }
  }
  return theta;
}

}  // namespace hara
