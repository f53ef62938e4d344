#include "hara/verifier.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "hara/error.h"
#include "hara/optimizer.h"

namespace hara {
namespace {

constexpr double kShrink = 0.95;
// Radius used along directions in which the admissible set is unbounded.
constexpr double kUnboundedRadius = 1.0;
constexpr double kRefuterTol = 1e-12;

double scaled(double diff, double ref) { return diff / std::max(1.0, std::abs(ref)); }

// E[U(child, W * g_child)] - U(node, W) at one node.
double one_step_gap(const MarketTree& tree, const RandomFieldUtility& u, NodeId id, const Vector& theta,
                    double wealth) {
  const double mean = expect_children(tree, id, [&](NodeId c) {
    return u(c, wealth * (1.0 + theta.dot(tree.node(c).delta_s)));
  });
  return mean - u(id, wealth);
}

Vector clip_into(const AdmissibleSet& set, const Vector& theta) {
  const double norm = theta.norm();
  if (norm == 0.0) return theta;
  const double exit = set.ray_exit(theta / norm);
  const double limit = std::isfinite(exit) ? kShrink * exit : std::numeric_limits<double>::infinity();
  return norm <= limit ? theta : Vector(theta * (limit / norm));
}

Vector sample_rate(const AdmissibleSet& set, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (d == 1) {
    const auto iv = *set.interval();
    const double lo = kShrink * (std::isfinite(iv.lower) ? iv.lower : -kUnboundedRadius);
    const double hi = kShrink * (std::isfinite(iv.upper) ? iv.upper : kUnboundedRadius);
    return Vector::Constant(1, lo + (hi - lo) * unit(rng));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector dir(d);
  for (int i = 0; i < d; ++i) dir(i) = normal(rng);
  dir.normalize();
  double exit = set.ray_exit(dir);
  if (!std::isfinite(exit)) exit = kUnboundedRadius;
  return dir * (kShrink * exit * std::pow(unit(rng), 1.0 / d));
}

// Strategy-independent wealth along a rate process.
AdaptedProcess wealth_along(const MarketTree& tree, const PredictableProcess& theta, double x0) {
  AdaptedProcess w(tree.size(), x0);
  for (NodeId id : tree.internal_nodes()) {
    for (NodeId c : tree.children(id)) w[c] = w[id] * (1.0 + theta.at(id).dot(tree.node(c).delta_s));
  }
  return w;
}

}  // namespace

RandomFieldUtility RandomFieldUtility::Power(AdaptedProcess d, AdaptedProcess p) {
  if (d.size() != p.size()) throw ValidationError("D and p processes differ in length");
  for (NodeId id = 0; id < p.size(); ++id) {
    if (!(p[id] < 1.0) || p[id] == 0.0 || !std::isfinite(p[id])) {
      throw ValidationError("power exponent at node " + std::to_string(id) + " must be < 1 and nonzero");
    }
  }
  return RandomFieldUtility(Kind::kPower, std::move(d), std::move(p));
}

RandomFieldUtility RandomFieldUtility::Power(AdaptedProcess d, double p) {
  AdaptedProcess ps(d.size(), p);
  return Power(std::move(d), std::move(ps));
}

RandomFieldUtility RandomFieldUtility::Log(AdaptedProcess d_hat, AdaptedProcess d_bar) {
  if (d_hat.size() != d_bar.size()) throw ValidationError("D_hat and D_bar differ in length");
  return RandomFieldUtility(Kind::kLog, std::move(d_hat), std::move(d_bar));
}

RandomFieldUtility RandomFieldUtility::FromResult(const ForwardUtilityResult& result) {
  if (result.risk_aversion.is_log()) return Log(result.d_hat, result.d_bar);
  return Power(result.d, result.risk_aversion.p());
}

double RandomFieldUtility::operator()(NodeId id, double x) const {
  if (kind_ == Kind::kLog) return first_[id] * std::log(x) + second_[id];
  return first_[id] * std::pow(x, second_[id]);
}

std::optional<std::string> RandomFieldUtility::utility_gate() const {
  static constexpr double kGrid[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  for (NodeId id = 0; id < size(); ++id) {
    double v[5];
    for (int i = 0; i < 5; ++i) v[i] = (*this)(id, kGrid[i]);
    for (int i = 0; i < 4; ++i) {
      if (!(v[i + 1] > v[i])) return "not strictly increasing at node " + std::to_string(id);
    }
    // The grid is geometric; concavity is judged on secant slopes.
    for (int i = 0; i < 3; ++i) {
      const double s0 = (v[i + 1] - v[i]) / (kGrid[i + 1] - kGrid[i]);
      const double s1 = (v[i + 2] - v[i + 1]) / (kGrid[i + 2] - kGrid[i + 1]);
      if (!(s1 < s0)) return "not strictly concave at node " + std::to_string(id);
    }
  }
  return std::nullopt;
}

RandomFieldUtility transform_under_density(const MarketTree& tree, const RandomFieldUtility& u,
                                           const AdaptedProcess& z) {
  if (z.size() != tree.size() || u.size() != tree.size()) throw ValidationError("density does not match the tree");
  if (std::abs(z[kRoot] - 1.0) > 1e-12) throw ValidationError("density must start at 1");
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (!(z[id] > 0.0)) throw ValidationError("density must be positive (node " + std::to_string(id) + ")");
  }
  for (NodeId id : tree.internal_nodes()) {
    const double m = expect_children(tree, id, [&](NodeId c) { return z[c]; });
    if (std::abs(m - z[id]) > 1e-12 * std::max(1.0, z[id])) {
      throw ValidationError("density is not a martingale at node " + std::to_string(id));
    }
  }
  AdaptedProcess a = u.coefficient();
  AdaptedProcess b = u.second();
  for (NodeId id = 0; id < tree.size(); ++id) {
    a[id] *= z[id];
    if (u.kind() == RandomFieldUtility::Kind::kLog) b[id] *= z[id];
  }
  return u.kind() == RandomFieldUtility::Kind::kLog ? RandomFieldUtility::Log(std::move(a), std::move(b))
                                                    : RandomFieldUtility::Power(std::move(a), std::move(b));
}

RandomFieldUtility stopped_utility(const MarketTree& tree, const RandomFieldUtility& u,
                                   std::span<const NodeId> stopping_nodes) {
  std::vector<char> stop(tree.size(), 0);
  for (NodeId s : stopping_nodes) {
    if (s >= tree.size()) throw ValidationError("stopping node out of range");
    stop[s] = 1;
  }
  // frozen_at[id]: the stopping node at or above id, if any.
  std::vector<std::optional<NodeId>> frozen_at(tree.size());
  AdaptedProcess a = u.coefficient();
  AdaptedProcess b = u.second();
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& parent = tree.node(id).parent;
    if (parent && frozen_at[*parent]) {
      frozen_at[id] = frozen_at[*parent];
    } else if (stop[id]) {
      frozen_at[id] = id;
    }
    if (frozen_at[id]) {
      a[id] = u.coefficient()[*frozen_at[id]];
      b[id] = u.second()[*frozen_at[id]];
    }
  }
  return u.kind() == RandomFieldUtility::Kind::kLog ? RandomFieldUtility::Log(std::move(a), std::move(b))
                                                    : RandomFieldUtility::Power(std::move(a), std::move(b));
}

VerificationReport verify_forward(const MarketTree& tree, const RandomFieldUtility& u,
                                  const PredictableProcess& theta_hat, const std::vector<double>& x0_list,
                                  int n_random_strategies, std::uint64_t seed, double tol_m, double tol_s) {
  VerificationReport report;
  report.x0_list = x0_list;
  report.tol_m = tol_m;
  report.tol_s = tol_s;
  report.seed = seed;
  if (u.size() != tree.size()) throw ValidationError("utility does not match the tree");
  for (double x0 : x0_list) {
    if (!(x0 > 0.0)) throw ValidationError("initial wealth must be positive");
  }
  if (auto msg = u.utility_gate()) {
    report.utility_ok = false;
    report.utility_message = *msg;
    report.pass = false;
    return report;
  }

  const std::vector<NodeId> internal = tree.internal_nodes();
  std::vector<std::size_t> slot(tree.size(), 0);
  std::vector<AdmissibleSet> sets;
  sets.reserve(internal.size());
  for (std::size_t i = 0; i < internal.size(); ++i) {
    slot[internal[i]] = i;
    sets.push_back(admissible_set(tree, internal[i]));
    NodeVerification nv;
    nv.node = internal[i];
    report.nodes.push_back(nv);
  }

  // (b) along theta_hat.
  for (double x0 : x0_list) {
    const AdaptedProcess w = wealth_along(tree, theta_hat, x0);
    std::vector<NodeId> failing;
    for (NodeId id : internal) {
      if (!(w[id] > 0.0)) throw DomainError("optimal wealth is not positive at node " + std::to_string(id));
      const double err = std::abs(scaled(one_step_gap(tree, u, id, theta_hat.at(id), w[id]), u(id, w[id])));
      auto& nv = report.nodes[slot[id]];
      nv.martingale_error = std::max(nv.martingale_error, err);
      if (err > report.martingale_max_error) {
        report.martingale_max_error = err;
        report.martingale_worst_node = id;
      }
      if (!(err <= tol_m)) failing.push_back(id);
    }
    report.martingale_fail_nodes.push_back(std::move(failing));
  }

  // (c) along sampled and deterministic strategies.
  std::mt19937_64 rng(seed);
  auto check_strategy = [&](const PredictableProcess& theta) {
    for (double x0 : x0_list) {
      const AdaptedProcess w = wealth_along(tree, theta, x0);
      for (NodeId id : internal) {
        const double v = scaled(one_step_gap(tree, u, id, theta.at(id), w[id]), u(id, w[id]));
        auto& nv = report.nodes[slot[id]];
        nv.worst_violation = std::max(nv.worst_violation, v);
        if (v > report.supermartingale_worst_violation) {
          report.supermartingale_worst_violation = v;
          report.supermartingale_worst_node = id;
        }
      }
    }
    ++report.strategies_tested;
  };
  for (int kind = 0; kind < 3; ++kind) {
    PredictableProcess theta(tree);
    for (NodeId id : internal) {
      const Vector& t = theta_hat.at(id);
      const Vector v = kind == 0 ? Vector(Vector::Zero(t.size())) : kind == 1 ? Vector(0.5 * t) : Vector(2.0 * t);
      theta.set(id, kind == 2 ? clip_into(sets[slot[id]], v) : v);
    }
    check_strategy(theta);
  }
  for (int s = 0; s < n_random_strategies; ++s) {
    PredictableProcess theta(tree);
    for (NodeId id : internal) theta.set(id, sample_rate(sets[slot[id]], tree.dimension(), rng));
    check_strategy(theta);
  }

  report.pass = report.martingale_max_error <= tol_m && report.supermartingale_worst_violation <= tol_s;
  return report;
}

GridCheckReport exhaustive_grid_check(const MarketTree& tree, const RandomFieldUtility& u,
                                      const PredictableProcess& theta_hat, const std::vector<double>& x0_list,
                                      int points_per_node) {
  if (tree.dimension() != 1) throw ValidationError("exhaustive grid check needs a one-asset tree");
  GridCheckReport report;
  report.points_per_node = points_per_node;
  for (double x0 : x0_list) {
    const AdaptedProcess w = wealth_along(tree, theta_hat, x0);
    for (NodeId id : tree.internal_nodes()) {
      const auto iv = *admissible_set(tree, id).interval();
      const double lo = kShrink * (std::isfinite(iv.lower) ? iv.lower : -kUnboundedRadius);
      const double hi = kShrink * (std::isfinite(iv.upper) ? iv.upper : kUnboundedRadius);
      for (int i = 0; i < points_per_node; ++i) {
        const double t = points_per_node == 1 ? 0.0 : lo + (hi - lo) * i / (points_per_node - 1);
        const Vector theta = Vector::Constant(1, t);
        const double v = scaled(one_step_gap(tree, u, id, theta, w[id]), u(id, w[id]));
        if (v > report.worst_violation) {
          report.worst_violation = v;
          report.worst_node = id;
          report.worst_theta = t;
        }
      }
    }
  }
  return report;
}

NonconstantPReport detect_nonconstant_p(const MarketTree& tree, const AdaptedProcess& d,
                                        const AdaptedProcess& p_process, int n_probes, std::uint64_t seed) {
  if (d.size() != tree.size() || p_process.size() != tree.size()) {
    throw ValidationError("processes do not match the tree");
  }
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (!(p_process[id] < 1.0) || p_process[id] == 0.0) {
      throw ValidationError("exponent at node " + std::to_string(id) + " must be < 1 and nonzero");
    }
    if (!(d[id] * p_process[id] > 0.0)) {
      throw ValidationError("D and p must share their sign at node " + std::to_string(id));
    }
  }
  std::vector<double> xs;
  for (int k = 1; k <= n_probes; ++k) {
    xs.push_back(std::exp(-static_cast<double>(k)));
    xs.push_back(std::exp(static_cast<double>(k)));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> expo(-static_cast<double>(n_probes), static_cast<double>(n_probes));
  for (int k = 0; k < n_probes; ++k) xs.push_back(std::exp(expo(rng)));

  NonconstantPReport report;
  for (NodeId id : tree.internal_nodes()) {
    // When all children share an exponent pc, max over theta of E[D_c g^pc] is
    // a single solve, independent of x.
    std::optional<double> best;
    const auto kids = tree.children(id);
    const double pc = p_process[kids.first];
    bool shared = true;
    for (NodeId c : kids) shared = shared && p_process[c] == pc;
    if (shared) {
      const NodeSolution sol = solve_power_foc(node_branches(tree, id, d), pc);
      if (sol.ok()) {
        best = expect_children(tree, id, [&](NodeId c) {
          return d[c] * std::pow(1.0 + sol.theta_hat.dot(tree.node(c).delta_s), pc);
        });
      }
    }
    for (double x : xs) {
      const double rhs = d[id] * std::pow(x, p_process[id]);
      const double tol = kRefuterTol * std::max(1.0, std::abs(rhs));
      const double lhs = expect_children(tree, id, [&](NodeId c) { return d[c] * std::pow(x, p_process[c]); });
      report.probes += 1;
      if (lhs > rhs + tol) report.certificates.push_back({id, x, "null strategy", lhs, rhs});
      if (best) {
        const double sup = *best * std::pow(x, pc);
        report.probes += 1;
        if (sup < rhs - tol) report.certificates.push_back({id, x, "attainability", sup, rhs});
      }
    }
  }
  return report;
}

}  // namespace hara
