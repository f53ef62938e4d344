#include "hara/forward_synthesis.h"

#include <cmath>
#include <string>

#include "hara/error.h"
#include "hara/hellinger.h"

namespace hara {
namespace {

void check_leaf_count(const MarketTree& tree, std::size_t n, const char* what) {
  if (n != tree.leaf_count()) {
    throw ValidationError(std::string(what) + " needs one value per leaf (" +
                          std::to_string(tree.leaf_count()) + "), got " + std::to_string(n));
  }
}

NodeSolution solve_node(const MarketTree& tree, NodeId id, double p, const AdaptedProcess& weights_from,
                        const SynthesisOptions& options) {
  const BranchWeights node = node_branches(tree, id, weights_from);
  NodeSolution sol = p == 0.0 ? solve_log_foc(node, options.solver) : solve_power_foc(node, p, options.solver);
  if (!sol.ok() && !options.accept_flagged_nodes) {
    std::string why = sol.boundary_flag ? "optimum runs to the boundary of the admissible set"
                                        : "first-order condition did not converge";
    throw SolverError(id, "node " + std::to_string(id) + " (depth " + std::to_string(tree.node(id).depth) +
                              "): " + why);
  }
  return sol;
}

double gross_return(const MarketTree& tree, const Vector& theta, NodeId child) {
  return 1.0 + theta.dot(tree.node(child).delta_s);
}

}  // namespace

HaraSpec HaraSpec::Power(double p, std::vector<double> d_terminal) {
  HaraSpec spec(RiskAversion::FromP(p));
  if (spec.is_log()) throw ValidationError("power spec needs p != 0; use HaraSpec::Log");
  for (std::size_t i = 0; i < d_terminal.size(); ++i) {
    if (!(p * d_terminal[i] > 0.0) || !std::isfinite(d_terminal[i])) {
      throw ValidationError("terminal D at leaf " + std::to_string(i) + " must have the sign of p");
    }
  }
  spec.d_terminal_ = std::move(d_terminal);
  return spec;
}

HaraSpec HaraSpec::Log(std::vector<double> d_hat_terminal, std::vector<double> d_bar_terminal) {
  HaraSpec spec(RiskAversion::Log());
  if (d_hat_terminal.size() != d_bar_terminal.size()) {
    throw ValidationError("terminal D_hat and D_bar differ in length");
  }
  for (std::size_t i = 0; i < d_hat_terminal.size(); ++i) {
    if (!(d_hat_terminal[i] > 0.0) || !std::isfinite(d_hat_terminal[i])) {
      throw ValidationError("terminal D_hat at leaf " + std::to_string(i) + " must be positive");
    }
    if (!std::isfinite(d_bar_terminal[i])) {
      throw ValidationError("terminal D_bar at leaf " + std::to_string(i) + " must be finite");
    }
  }
  spec.d_hat_terminal_ = std::move(d_hat_terminal);
  spec.d_bar_terminal_ = std::move(d_bar_terminal);
  return spec;
}

ForwardUtilityResult synthesize_power(const MarketTree& tree, const HaraSpec& spec,
                                      const SynthesisOptions& options) {
  if (spec.is_log()) throw ValidationError("synthesize_power needs a power spec");
  check_leaf_count(tree, spec.d_terminal().size(), "terminal D");
  const double p = spec.risk_aversion().p();

  ForwardUtilityResult out;
  out.risk_aversion = spec.risk_aversion();
  out.d = AdaptedProcess(tree.size());
  out.theta_hat = PredictableProcess(tree);
  out.node_solutions.assign(tree.size(), std::nullopt);

  const auto leaves = tree.leaves();
  for (NodeId id : leaves) out.d[id] = spec.d_terminal()[id - leaves.first];

  for (int depth = tree.horizon() - 1; depth >= 0; --depth) {
    for (NodeId id : tree.level(depth)) {
      NodeSolution sol = solve_node(tree, id, p, out.d, options);
      const Vector theta = sol.theta_hat;
      out.d[id] = expect_children(tree, id, [&](NodeId c) {
        return out.d[c] * std::pow(gross_return(tree, theta, c), p);
      });
      out.theta_hat.set(id, theta);
      out.node_solutions[id] = std::move(sol);
    }
  }

  DoobDecomposition doob = doob_decomposition(tree, out.d);
  out.z_d = doob.z_d.values();
  out.a_d = std::move(doob.a_d);
  return out;
}

ForwardUtilityResult synthesize_power(const MarketTree& tree, const HaraSpec& spec, double tol) {
  SynthesisOptions options;
  options.solver.tol = tol;
  return synthesize_power(tree, spec, options);
}

ForwardUtilityResult synthesize_log(const MarketTree& tree, const HaraSpec& spec,
                                    const SynthesisOptions& options) {
  if (!spec.is_log()) throw ValidationError("synthesize_log needs a log spec");
  check_leaf_count(tree, spec.d_hat_terminal().size(), "terminal D_hat");

  ForwardUtilityResult out;
  out.risk_aversion = spec.risk_aversion();
  out.d_hat = AdaptedProcess(tree.size());
  out.d_bar = AdaptedProcess(tree.size());
  out.theta_hat = PredictableProcess(tree);
  out.node_solutions.assign(tree.size(), std::nullopt);

  const auto leaves = tree.leaves();
  for (NodeId id : leaves) {
    out.d_hat[id] = spec.d_hat_terminal()[id - leaves.first];
    out.d_bar[id] = spec.d_bar_terminal()[id - leaves.first];
  }

  // drift[id]: E[D_hat(j) log(1+theta'dS) | node], the one-step decrease of
  // the predictable part of D_bar.
  AdaptedProcess drift(tree.size());
  for (int depth = tree.horizon() - 1; depth >= 0; --depth) {
    for (NodeId id : tree.level(depth)) {
      out.d_hat[id] = expect_children(tree, id, [&](NodeId c) { return out.d_hat[c]; });
      NodeSolution sol = solve_node(tree, id, 0.0, out.d_hat, options);
      const Vector theta = sol.theta_hat;
      drift[id] = expect_children(tree, id, [&](NodeId c) {
        return out.d_hat[c] * std::log(gross_return(tree, theta, c));
      });
      out.d_bar[id] = expect_children(tree, id, [&](NodeId c) { return out.d_bar[c]; }) + drift[id];
      out.theta_hat.set(id, theta);
      out.node_solutions[id] = std::move(sol);
    }
  }

  out.d_bar_predictable = AdaptedProcess(tree.size());
  out.d_bar_martingale = AdaptedProcess(tree.size());
  out.d_bar_martingale[kRoot] = out.d_bar[kRoot];
  for (NodeId id : tree.internal_nodes()) {
    for (NodeId c : tree.children(id)) {
      out.d_bar_predictable[c] = out.d_bar_predictable[id] - drift[id];
      out.d_bar_martingale[c] = out.d_bar[c] - out.d_bar_predictable[c];
    }
  }

  DoobDecomposition doob = doob_decomposition(tree, out.d_hat);
  out.z_d = doob.z_d.values();
  out.a_d = std::move(doob.a_d);
  return out;
}

ForwardUtilityResult synthesize_log(const MarketTree& tree, const HaraSpec& spec, double tol) {
  SynthesisOptions options;
  options.solver.tol = tol;
  return synthesize_log(tree, spec, options);
}

ForwardUtilityResult synthesize(const MarketTree& tree, const HaraSpec& spec, const SynthesisOptions& options) {
  return spec.is_log() ? synthesize_log(tree, spec, options) : synthesize_power(tree, spec, options);
}

AdaptedProcess binomial_a_d(const MarketTree& tree, const HaraSpec& spec, const ForwardUtilityResult& result) {
  if (spec.is_log()) throw ValidationError("closed-form a_D is defined for the power case");
  if (tree.dimension() != 1) throw ValidationError("closed-form a_D needs a one-asset tree");
  const double p = spec.risk_aversion().p();
  AdaptedProcess a(tree.size());
  for (NodeId id : tree.internal_nodes()) {
    const auto kids = tree.children(id);
    if (kids.size() != 2) {
      throw ValidationError("closed-form a_D needs a binomial tree; node " + std::to_string(id) + " has " +
                            std::to_string(kids.size()) + " children");
    }
    NodeId up = kids.first;
    NodeId down = kids.first + 1;
    if (tree.node(up).delta_s(0) < tree.node(down).delta_s(0)) std::swap(up, down);
    const double s_prev = tree.node(id).s(0);
    const double xi_u = tree.node(up).s(0) / s_prev;
    const double xi_d = tree.node(down).s(0) / s_prev;
    const double wu = tree.node(up).branch_probability * std::abs(result.d[up]);
    const double wd = tree.node(down).branch_probability * std::abs(result.d[down]);
    const double q_up = wu / (wu + wd);

    const BinomialPowerSolution cf = binomial_power_closed_form(xi_u, xi_d, s_prev, q_up, p);
    // (gamma^(p-1) Q + 1 - Q) (xi_u - xi_d)^(p-1) / (xi_u - 1 - gamma xi_d + gamma)^(p-1),
    // with (xi_u - xi_d) / (xi_u - 1 - gamma xi_d + gamma) the down-branch gross return.
    const double log_gamma = cf.log_gross_up - cf.log_gross_down;
    const double step = std::log(std::exp((p - 1.0) * log_gamma) * q_up + (1.0 - q_up)) +
                        (p - 1.0) * cf.log_gross_down;
    for (NodeId c : kids) a[c] = a[id] - step;
  }
  return a;
}

}  // namespace hara
