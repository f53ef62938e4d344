#include "hara/scenario.h"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "hara/error.h"
#include "json.hpp"

namespace hara {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr double kThetaCrosscheckTol = 1e-9;
constexpr double kADCrosscheckTol = 1e-10;
constexpr double kDensityDefectTol = 1e-11;
constexpr int kGridPointsPerDimension = 10000;

// Locates the 1-based line of a dotted field path by walking its keys through
// the raw text; array indices are ignored.
int line_of(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  std::size_t start = 0;
  bool found = false;
  while (start <= path.size()) {
    std::size_t end = path.find('.', start);
    if (end == std::string::npos) end = path.size();
    std::string key = path.substr(start, end - start);
    key = key.substr(0, key.find('['));
    if (!key.empty()) {
      const std::size_t at = text.find("\"" + key + "\"", pos);
      if (at == std::string::npos) break;
      pos = at;
      found = true;
    }
    start = end + 1;
  }
  if (!found) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ConfigError(path, line_of(text_, path), msg);
  }

  const json& object(const json& parent, const std::string& key, const std::string& path) const {
    if (!parent.contains(key)) fail(path, "missing required object '" + key + "'");
    const json& v = parent.at(key);
    if (!v.is_object()) fail(path, "must be an object");
    return v;
  }

  void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!ok.count(it.key())) fail(join(path, it.key()), "unknown field");
    }
  }

  double number(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.contains(key)) fail(path, "missing required field");
    return as_number(obj.at(key), path);
  }

  double number_or(const json& obj, const std::string& key, const std::string& path, double fallback) const {
    return obj.contains(key) ? as_number(obj.at(key), path) : fallback;
  }

  long integer(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.contains(key)) fail(path, "missing required field");
    return as_integer(obj.at(key), path);
  }

  long as_integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "must be an integer");
    return v.get<long>();
  }

  double as_number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    return x;
  }

  std::string string(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.contains(key)) fail(path, "missing required field");
    if (!obj.at(key).is_string()) fail(path, "must be a string");
    return obj.at(key).get<std::string>();
  }

  // A number or an array of numbers.
  std::vector<double> numbers(const json& v, const std::string& path) const {
    if (v.is_number()) return {as_number(v, path)};
    if (!v.is_array() || v.empty()) fail(path, "must be a number or a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], indexed(path, i)));
    return out;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
  static std::string indexed(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
  }

 private:
  const std::string& text_;
};

MarketConfig parse_market(const Reader& r, const json& m) {
  MarketConfig out;
  const std::string kind = r.string(m, "kind", "market.kind");
  if (kind == "binomial") {
    out.kind = MarketConfig::Kind::kBinomial;
    r.only_keys(m, "market", {"kind", "T", "s0", "xi_u", "xi_d", "prob_up"});
    out.horizon = static_cast<int>(r.integer(m, "T", "market.T"));
    if (out.horizon < 1) r.fail("market.T", "must be at least 1");
    out.s0 = r.number(m, "s0", "market.s0");
    if (!(out.s0 > 0.0)) r.fail("market.s0", "must be positive");
    auto per_period = [&](const char* key) {
      const std::string path = std::string("market.") + key;
      if (!m.contains(key)) r.fail(path, "missing required field");
      std::vector<double> v = r.numbers(m.at(key), path);
      if (v.size() == 1 && !m.at(key).is_array()) v.assign(static_cast<std::size_t>(out.horizon), v[0]);
      if (v.size() != static_cast<std::size_t>(out.horizon)) {
        r.fail(path, "needs one value per period (T = " + std::to_string(out.horizon) + "), got " +
                         std::to_string(v.size()));
      }
      return v;
    };
    out.xi_u = per_period("xi_u");
    out.xi_d = per_period("xi_d");
    out.prob_up = per_period("prob_up");
    for (std::size_t j = 0; j < out.xi_u.size(); ++j) {
      if (!(out.xi_u[j] > 1.0)) r.fail(Reader::indexed("market.xi_u", j), "must exceed 1");
      if (!(out.xi_d[j] > 0.0 && out.xi_d[j] < 1.0)) r.fail(Reader::indexed("market.xi_d", j), "must lie in (0, 1)");
      if (!(out.prob_up[j] > 0.0 && out.prob_up[j] < 1.0)) {
        r.fail(Reader::indexed("market.prob_up", j), "must lie in (0, 1)");
      }
    }
  } else if (kind == "explicit") {
    out.kind = MarketConfig::Kind::kExplicit;
    r.only_keys(m, "market", {"kind", "dimension", "s0", "nodes"});
    out.dimension = static_cast<int>(r.integer(m, "dimension", "market.dimension"));
    if (out.dimension < 1) r.fail("market.dimension", "must be at least 1");
    if (!m.contains("s0")) r.fail("market.s0", "missing required field");
    out.s0_vector = r.numbers(m.at("s0"), "market.s0");
    if (out.s0_vector.size() != static_cast<std::size_t>(out.dimension)) {
      r.fail("market.s0", "needs one price per asset");
    }
    if (!m.contains("nodes") || !m.at("nodes").is_array() || m.at("nodes").empty()) {
      r.fail("market.nodes", "must be a non-empty array");
    }
    const json& nodes = m.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::string path = Reader::indexed("market.nodes", i);
      const json& n = nodes[i];
      if (!n.is_object()) r.fail(path, "must be an object");
      r.only_keys(n, path, {"id", "parent", "prob", "delta_s", "s"});
      MarketConfig::ExplicitNode node;
      node.id = r.integer(n, "id", path + ".id");
      node.parent = r.integer(n, "parent", path + ".parent");
      node.prob = r.number(n, "prob", path + ".prob");
      if (!(node.prob > 0.0 && node.prob <= 1.0)) r.fail(path + ".prob", "must lie in (0, 1]");
      if (!n.contains("delta_s")) r.fail(path + ".delta_s", "missing required field");
      node.delta_s = r.numbers(n.at("delta_s"), path + ".delta_s");
      if (node.delta_s.size() != static_cast<std::size_t>(out.dimension)) {
        r.fail(path + ".delta_s", "needs one increment per asset");
      }
      if (n.contains("s")) {
        node.s = r.numbers(n.at("s"), path + ".s");
        if (node.s->size() != static_cast<std::size_t>(out.dimension)) r.fail(path + ".s", "needs one price per asset");
      }
      out.nodes.push_back(std::move(node));
    }
  } else {
    r.fail("market.kind", "must be \"binomial\" or \"explicit\"");
  }
  return out;
}

UtilityConfig parse_utility(const Reader& r, const json& u) {
  UtilityConfig out;
  const std::string kind = r.string(u, "kind", "utility.kind");
  if (kind == "power") {
    r.only_keys(u, "utility", {"kind", "p", "terminal_D"});
    out.p = r.number(u, "p", "utility.p");
    if (!(out.p < 1.0) || out.p == 0.0) r.fail("utility.p", "must be < 1 and nonzero (use kind \"log\" for p = 0)");
    out.terminal_d = u.contains("terminal_D") ? r.numbers(u.at("terminal_D"), "utility.terminal_D")
                                              : std::vector<double>{out.p > 0.0 ? 1.0 : -1.0};
    for (std::size_t i = 0; i < out.terminal_d.size(); ++i) {
      if (!(out.p * out.terminal_d[i] > 0.0)) {
        r.fail(Reader::indexed("utility.terminal_D", i), "must have the sign of p");
      }
    }
  } else if (kind == "log") {
    out.log = true;
    r.only_keys(u, "utility", {"kind", "terminal_D_hat", "terminal_D_bar"});
    out.terminal_d_hat = u.contains("terminal_D_hat") ? r.numbers(u.at("terminal_D_hat"), "utility.terminal_D_hat")
                                                      : std::vector<double>{1.0};
    out.terminal_d_bar = u.contains("terminal_D_bar") ? r.numbers(u.at("terminal_D_bar"), "utility.terminal_D_bar")
                                                      : std::vector<double>{0.0};
    for (std::size_t i = 0; i < out.terminal_d_hat.size(); ++i) {
      if (!(out.terminal_d_hat[i] > 0.0)) r.fail(Reader::indexed("utility.terminal_D_hat", i), "must be positive");
    }
  } else {
    r.fail("utility.kind", "must be \"power\" or \"log\"");
  }
  return out;
}

RunConfig parse_run(const Reader& r, const json& run) {
  RunConfig out;
  r.only_keys(run, "run", {"tol_foc", "tol_verify", "n_random_strategies", "n_competitor_densities", "seed",
                           "checks", "x0", "adversarial"});
  out.tol_foc = r.number_or(run, "tol_foc", "run.tol_foc", out.tol_foc);
  out.tol_verify = r.number_or(run, "tol_verify", "run.tol_verify", out.tol_verify);
  if (!(out.tol_foc > 0.0)) r.fail("run.tol_foc", "must be positive");
  if (!(out.tol_verify > 0.0)) r.fail("run.tol_verify", "must be positive");
  if (run.contains("n_random_strategies")) {
    out.n_random_strategies = static_cast<int>(r.as_integer(run.at("n_random_strategies"), "run.n_random_strategies"));
    if (out.n_random_strategies < 0) r.fail("run.n_random_strategies", "must be nonnegative");
  }
  if (run.contains("n_competitor_densities")) {
    out.n_competitor_densities =
        static_cast<int>(r.as_integer(run.at("n_competitor_densities"), "run.n_competitor_densities"));
    if (out.n_competitor_densities < 0) r.fail("run.n_competitor_densities", "must be nonnegative");
  }
  if (run.contains("seed")) {
    const json& s = run.at("seed");
    if (!s.is_number_unsigned()) r.fail("run.seed", "must be a nonnegative integer");
    out.seed = s.get<std::uint64_t>();
  }
  if (run.contains("checks")) {
    const json& c = run.at("checks");
    if (!c.is_array()) r.fail("run.checks", "must be an array of check names");
    out.checks.clear();
    for (std::size_t i = 0; i < c.size(); ++i) {
      const std::string path = Reader::indexed("run.checks", i);
      if (!c[i].is_string()) r.fail(path, "must be a string");
      const std::string name = c[i].get<std::string>();
      if (std::find(kAllChecks.begin(), kAllChecks.end(), name) == kAllChecks.end()) {
        r.fail(path, "unknown check \"" + name + "\"");
      }
      out.checks.push_back(name);
    }
  }
  if (run.contains("x0")) {
    out.x0 = r.numbers(run.at("x0"), "run.x0");
    for (std::size_t i = 0; i < out.x0.size(); ++i) {
      if (!(out.x0[i] > 0.0)) r.fail(Reader::indexed("run.x0", i), "must be positive");
    }
  }
  if (run.contains("adversarial")) {
    const json& a = run.at("adversarial");
    if (a.is_boolean()) {
      if (a.get<bool>()) out.adversarial = RunConfig::Adversarial{};
    } else if (a.is_object()) {
      r.only_keys(a, "run.adversarial", {"leaf", "factor"});
      RunConfig::Adversarial adv;
      if (a.contains("leaf")) {
        const long leaf = r.as_integer(a.at("leaf"), "run.adversarial.leaf");
        if (leaf < 0) r.fail("run.adversarial.leaf", "must be nonnegative");
        adv.leaf = static_cast<std::size_t>(leaf);
      }
      adv.factor = r.number_or(a, "factor", "run.adversarial.factor", adv.factor);
      if (!(adv.factor > 0.0)) r.fail("run.adversarial.factor", "must be positive");
      out.adversarial = adv;
    } else {
      r.fail("run.adversarial", "must be a boolean or an object");
    }
  }
  return out;
}

std::vector<double> expand(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() == 1) return std::vector<double>(n, v[0]);
  if (v.size() != n) {
    throw ValidationError(std::string(what) + " needs 1 or " + std::to_string(n) + " values, got " +
                          std::to_string(v.size()));
  }
  return v;
}

ojson to_json(const Vector& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// JSON has no infinities; they are written as strings.
ojson num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

bool binomial_shaped(const MarketTree& tree) {
  if (tree.dimension() != 1) return false;
  for (NodeId id : tree.internal_nodes()) {
    const auto kids = tree.children(id);
    if (kids.size() != 2) return false;
    const double a = tree.node(kids.first).delta_s(0);
    const double b = tree.node(kids.first + 1).delta_s(0);
    if (!(a * b < 0.0) || !(tree.node(id).s(0) > 0.0)) return false;
  }
  return true;
}

struct CheckResult {
  bool applicable = true;
  bool pass = true;
  ojson detail;
  std::string summary;
};

CheckResult run_verify(const MarketTree& tree, const ForwardUtilityResult& result, const RunConfig& run) {
  RandomFieldUtility u = RandomFieldUtility::FromResult(result);
  ojson detail;
  if (run.adversarial) {
    const auto leaves = tree.leaves();
    if (run.adversarial->leaf >= leaves.size()) {
      throw ValidationError("adversarial leaf index out of range");
    }
    const NodeId leaf = leaves.first + run.adversarial->leaf;
    AdaptedProcess a = u.coefficient();
    a[leaf] *= run.adversarial->factor;
    u = u.kind() == RandomFieldUtility::Kind::kLog ? RandomFieldUtility::Log(a, u.second())
                                                   : RandomFieldUtility::Power(a, u.second());
    detail["adversarial"] = {{"node", leaf}, {"factor", run.adversarial->factor}};
  }
  const VerificationReport rep =
      verify_forward(tree, u, result.theta_hat, run.x0, run.n_random_strategies, run.seed, run.tol_verify,
                     run.tol_verify);
  detail["utility_gate"] = rep.utility_ok ? "pass" : rep.utility_message;
  detail["martingale_max_error"] = num(rep.martingale_max_error);
  detail["martingale_worst_node"] = rep.martingale_worst_node;
  detail["supermartingale_worst_violation"] = num(rep.supermartingale_worst_violation);
  detail["supermartingale_worst_node"] = rep.supermartingale_worst_node;
  detail["strategies_tested"] = rep.strategies_tested;
  detail["x0"] = rep.x0_list;
  ojson fails = ojson::array();
  for (std::size_t i = 0; i < rep.martingale_fail_nodes.size(); ++i) {
    fails.push_back({{"x0", rep.x0_list[i]}, {"nodes", rep.martingale_fail_nodes[i]}});
  }
  detail["martingale_fail_nodes"] = fails;
  ojson nodes = ojson::array();
  for (const auto& n : rep.nodes) {
    nodes.push_back({{"node", n.node},
                     {"martingale_error", num(n.martingale_error)},
                     {"worst_violation", num(n.worst_violation)}});
  }
  detail["nodes"] = nodes;
  detail["tol_m"] = rep.tol_m;
  detail["tol_s"] = rep.tol_s;
  detail["seed"] = rep.seed;
  detail["note"] =
      "sampled verification: the supermartingale inequality is checked on finitely many strategies drawn "
      "from the admissible set shrunk by 0.95, not on the whole continuum";
  CheckResult out;
  out.pass = rep.pass;
  out.detail = detail;
  std::ostringstream s;
  if (!rep.utility_ok) {
    s << "utility gate: " << rep.utility_message;
  } else {
    s << "martingale error " << format_double(rep.martingale_max_error) << " at node " << rep.martingale_worst_node
      << ", worst supermartingale violation " << format_double(rep.supermartingale_worst_violation) << " at node "
      << rep.supermartingale_worst_node;
  }
  out.summary = s.str();
  return out;
}

ojson domination_json(const DominationReport& rep) {
  ojson nodes = ojson::array();
  for (const auto& n : rep.nodes) {
    ojson e = {{"node", n.node},
               {"candidate_increment", num(n.candidate_increment)},
               {"best_competitor_increment", num(n.best_competitor_increment)},
               {"worst_margin", num(n.worst_margin)},
               {"competitors", n.competitors}};
    if (n.skipped) e["skipped"] = true;
    if (n.candidate_invalid) e["candidate_invalid"] = true;
    if (!n.note.empty()) e["note"] = n.note;
    nodes.push_back(e);
  }
  return {{"q", rep.q}, {"slack", rep.slack}, {"worst_margin", num(rep.worst_margin)},
          {"pass", rep.pass}, {"nodes", nodes}};
}

CheckResult run_mhm(const MarketTree& tree, const ForwardUtilityResult& result, const RunConfig& run) {
  const double p = result.risk_aversion.p();
  const double q = result.risk_aversion.q();
  const DoobDecomposition doob = doob_decomposition(tree, result.coefficient());
  const MarketTree q_tree = tree.reweighted(doob.z_d.ratios());
  const DensityProcess z = mhm_density_from_theta(q_tree, result.theta_hat, p);
  double scale = 1.0;
  for (NodeId id = 1; id < tree.size(); ++id) scale = std::max(scale, tree.node(id).delta_s.cwiseAbs().maxCoeff());
  const double defect = martingale_density_defect(q_tree, z);
  const DominationReport sampled = verify_mhm_domination(q_tree, z, q, run.n_competitor_densities, run.seed);
  const DominationReport grid = grid_mhm_domination(q_tree, z, q, kGridPointsPerDimension);
  CheckResult out;
  out.pass = sampled.pass && grid.pass && defect <= kDensityDefectTol * scale;
  out.detail = {{"measure", "coefficient-reweighted tree"},
                {"martingale_density_defect", num(defect)},
                {"defect_tolerance", kDensityDefectTol * scale},
                {"sampled", domination_json(sampled)},
                {"grid", domination_json(grid)}};
  out.summary = "worst domination margin " + format_double(std::min(sampled.worst_margin, grid.worst_margin)) +
                ", density defect " + format_double(defect);
  return out;
}

CheckResult run_closed_form(const MarketTree& tree, const HaraSpec& spec, const ForwardUtilityResult& result) {
  CheckResult out;
  if (!binomial_shaped(tree)) {
    out.applicable = false;
    out.detail = {{"applicable", false}, {"reason", "market is not a one-asset binomial tree"}};
    return out;
  }
  const AdaptedProcess& w = result.coefficient();
  double theta_err = 0.0;
  double drift_err = 0.0;
  for (NodeId id : tree.internal_nodes()) {
    NodeId up = tree.children(id).first;
    NodeId down = up + 1;
    if (tree.node(up).delta_s(0) < 0.0) std::swap(up, down);
    const double s_prev = tree.node(id).s(0);
    const double xi_u = tree.node(up).s(0) / s_prev;
    const double xi_d = tree.node(down).s(0) / s_prev;
    const double wu = tree.node(up).branch_probability * std::abs(w[up]);
    const double wd = tree.node(down).branch_probability * std::abs(w[down]);
    const double q_up = wu / (wu + wd);
    const double theta = result.theta_hat.at(id)(0);
    const double cf = spec.is_log() ? binomial_log_closed_form(xi_u, xi_d, s_prev, q_up)
                                    : binomial_power_closed_form(xi_u, xi_d, s_prev, q_up, spec.risk_aversion().p())
                                          .theta_hat;
    theta_err = std::max(theta_err, std::abs(theta - cf) / std::max(1.0, std::abs(cf)));
    if (spec.is_log()) {
      // D_bar drift at the node: D_hat(node) times the closed-form growth rate.
      const double drift = result.d_bar[id] - expect_children(tree, id, [&](NodeId c) { return result.d_bar[c]; });
      const double expected = result.d_hat[id] * binomial_log_growth(xi_u, xi_d, q_up);
      drift_err = std::max(drift_err, std::abs(drift - expected) / std::max(1.0, std::abs(expected)));
    }
  }
  out.detail = {{"applicable", true}, {"theta_max_error", num(theta_err)}, {"theta_tolerance", kThetaCrosscheckTol}};
  out.pass = theta_err <= kThetaCrosscheckTol;
  if (spec.is_log()) {
    out.detail["d_bar_drift_max_error"] = num(drift_err);
    out.detail["d_bar_drift_tolerance"] = kADCrosscheckTol;
    out.pass = out.pass && drift_err <= kADCrosscheckTol;
  } else {
    const AdaptedProcess a = binomial_a_d(tree, spec, result);
    double a_err = 0.0;
    for (NodeId id = 0; id < tree.size(); ++id) a_err = std::max(a_err, std::abs(a[id] - result.a_d[id]));
    out.detail["a_d_max_error"] = num(a_err);
    out.detail["a_d_tolerance"] = kADCrosscheckTol;
    out.pass = out.pass && a_err <= kADCrosscheckTol;
  }
  out.summary = "closed-form theta error " + format_double(theta_err);
  return out;
}

std::string render_csv(const MarketTree& tree, const ForwardUtilityResult& result, const DensityProcess& z,
                       const HellingerIncrements& h) {
  const int d = tree.dimension();
  const bool log = result.risk_aversion.is_log();
  std::ostringstream out;
  out << "depth,node_id";
  for (int i = 0; i < d; ++i) out << (d == 1 ? ",S" : ",S_" + std::to_string(i + 1));
  out << (log ? ",D_hat,D_bar" : ",D");
  for (int i = 0; i < d; ++i) out << (d == 1 ? ",theta_hat" : ",theta_hat_" + std::to_string(i + 1));
  out << ",wealth,z_tilde_ratio,hellinger_increment\n";
  const AdaptedProcess wealth = wealth_process(1.0, result.theta_hat, tree);
  for (NodeId id = 0; id < tree.size(); ++id) {
    const Node& n = tree.node(id);
    out << n.depth << ',' << id;
    for (int i = 0; i < d; ++i) out << ',' << format_double(n.s(i));
    if (log) {
      out << ',' << format_double(result.d_hat[id]) << ',' << format_double(result.d_bar[id]);
    } else {
      out << ',' << format_double(result.d[id]);
    }
    for (int i = 0; i < d; ++i) {
      out << ',';
      if (!tree.is_leaf(id)) out << format_double(result.theta_hat.at(id)(i));
    }
    out << ',' << format_double(wealth[id]) << ',' << format_double(z.ratio(id)) << ',';
    if (!tree.is_leaf(id)) out << format_double(h.increments[id]);
    out << '\n';
  }
  return out.str();
}

ojson synthesis_json(const MarketTree& tree, const ForwardUtilityResult& result) {
  ojson nodes = ojson::array();
  for (NodeId id : tree.internal_nodes()) {
    const NodeSolution& s = *result.node_solutions[id];
    nodes.push_back({{"node", id},
                     {"depth", tree.node(id).depth},
                     {"theta_hat", to_json(s.theta_hat)},
                     {"foc_residual", num(s.foc_residual)},
                     {"iterations", s.iterations},
                     {"margin", num(s.margin)},
                     {"converged", s.converged},
                     {"boundary_flag", s.boundary_flag},
                     {"degenerate", s.degenerate},
                     {"redundant", s.redundant}});
  }
  ojson out;
  if (result.risk_aversion.is_log()) {
    out["D_hat_0"] = result.d_hat[kRoot];
    out["D_bar_0"] = result.d_bar[kRoot];
  } else {
    out["D_0"] = result.d[kRoot];
  }
  out["nodes"] = nodes;
  return out;
}

}  // namespace

ConfigError::ConfigError(std::string field, int line, const std::string& what)
    : std::runtime_error("field '" + field + "'" + (line > 0 ? " (line " + std::to_string(line) + ")" : "") +
                         ": " + what),
      field_(std::move(field)),
      line_(line) {}

ScenarioConfig parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
    throw ConfigError("<document>", line, std::string("invalid JSON: ") + e.what());
  }
  const Reader r(text);
  if (!root.is_object()) r.fail("<document>", "top level must be an object");
  r.only_keys(root, "", {"market", "utility", "run"});
  ScenarioConfig cfg;
  cfg.market = parse_market(r, r.object(root, "market", "market"));
  cfg.utility = parse_utility(r, r.object(root, "utility", "utility"));
  if (root.contains("run")) cfg.run = parse_run(r, r.object(root, "run", "run"));
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", 0, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

MarketTree build_market(const MarketConfig& market) {
  if (market.kind == MarketConfig::Kind::kBinomial) {
    return MarketTree::Binomial(market.horizon, market.s0, market.xi_u, market.xi_d, market.prob_up);
  }
  const Vector s0 = Eigen::Map<const Vector>(market.s0_vector.data(), market.dimension);
  MarketTree::Builder b(market.dimension, s0);
  for (const auto& n : market.nodes) {
    b.add_child(n.parent, n.id, n.prob, Eigen::Map<const Vector>(n.delta_s.data(), market.dimension));
    if (n.s) b.declare_price(n.id, Eigen::Map<const Vector>(n.s->data(), market.dimension));
  }
  return b.Build();
}

HaraSpec build_spec(const UtilityConfig& utility, const MarketTree& tree) {
  const std::size_t n = tree.leaf_count();
  if (utility.log) {
    return HaraSpec::Log(expand(utility.terminal_d_hat, n, "terminal_D_hat"),
                         expand(utility.terminal_d_bar, n, "terminal_D_bar"));
  }
  return HaraSpec::Power(utility.p, expand(utility.terminal_d, n, "terminal_D"));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ScenarioOutcome run_scenario_text(const std::string& config_text, const RunOverrides& overrides) {
  ScenarioOutcome out;
  ScenarioConfig cfg;
  std::optional<MarketTree> tree;
  std::optional<HaraSpec> spec;
  auto error_report = [&](int code, const std::string& kind, const std::string& msg, ojson extra = ojson::object()) {
    out.exit_code = code;
    out.message = msg;
    ojson rep;
    rep["verdict"] = "error";
    rep["exit_code"] = code;
    rep["error"] = {{"kind", kind}, {"message", msg}};
    for (auto it = extra.begin(); it != extra.end(); ++it) rep["error"][it.key()] = it.value();
    out.report_json = rep.dump(2) + "\n";
    return out;
  };

  try {
    cfg = parse_scenario(config_text);
    if (overrides.checks) cfg.run.checks = *overrides.checks;
    if (overrides.seed) cfg.run.seed = *overrides.seed;
    if (overrides.tol_foc) cfg.run.tol_foc = *overrides.tol_foc;
    if (overrides.tol_verify) cfg.run.tol_verify = *overrides.tol_verify;
    for (const auto& c : cfg.run.checks) {
      if (std::find(kAllChecks.begin(), kAllChecks.end(), c) == kAllChecks.end()) {
        throw ConfigError("--checks", 0, "unknown check \"" + c + "\"");
      }
    }
  } catch (const ConfigError& e) {
    return error_report(kExitSchema, "schema", e.what(), {{"field", e.field()}, {"line", e.line()}});
  }
  try {
    tree.emplace(build_market(cfg.market));
  } catch (const ValidationError& e) {
    return error_report(kExitSchema, "schema", std::string("field 'market': ") + e.what(),
                        {{"field", "market"}, {"line", line_of(config_text, "market")}});
  }
  try {
    spec.emplace(build_spec(cfg.utility, *tree));
  } catch (const ValidationError& e) {
    return error_report(kExitSchema, "schema", std::string("field 'utility': ") + e.what(),
                        {{"field", "utility"}, {"line", line_of(config_text, "utility")}});
  }

  SynthesisOptions options;
  options.solver.tol = cfg.run.tol_foc;
  ForwardUtilityResult result;
  try {
    result = synthesize(*tree, *spec, options);
  } catch (const SolverError& e) {
    return error_report(kExitSolver, "solver", e.what(), {{"node", e.node()}});
  }

  ojson report;
  report["seed"] = cfg.run.seed;
  report["market"] = {{"kind", cfg.market.kind == MarketConfig::Kind::kBinomial ? "binomial" : "explicit"},
                      {"horizon", tree->horizon()},
                      {"dimension", tree->dimension()},
                      {"nodes", tree->size()}};
  report["utility"] = {{"kind", spec->is_log() ? "log" : "power"},
                       {"p", spec->risk_aversion().p()},
                       {"q", spec->risk_aversion().q()}};
  report["tolerances"] = {{"tol_foc", cfg.run.tol_foc}, {"tol_verify", cfg.run.tol_verify}};
  report["synthesis"] = synthesis_json(*tree, result);

  ojson checks = ojson::object();
  bool all_pass = true;
  std::string first_failure;
  auto requested = [&](const std::string& name) {
    return std::find(cfg.run.checks.begin(), cfg.run.checks.end(), name) != cfg.run.checks.end();
  };
  auto record = [&](const std::string& name, CheckResult r) {
    if (!r.applicable) {
      r.detail["verdict"] = "not_applicable";
    } else {
      r.detail["verdict"] = r.pass ? "pass" : "fail";
      if (!r.pass) {
        all_pass = false;
        if (first_failure.empty()) first_failure = name + ": " + r.summary;
      }
    }
    checks[name] = r.detail;
  };

  DensityProcess z_tilde;
  HellingerIncrements hellinger;
  try {
    if (spec->is_log()) {
      const LogIdentityReport li = check_log_identity(*tree, result);
      z_tilde = li.z_tilde;
      hellinger = li.hellinger;
      if (requested("log_identity")) {
        CheckResult r;
        r.pass = li.pass;
        r.detail = {{"ratio_error", num(li.ratio_error)},     {"ratio_tolerance", li.ratio_tolerance},
                    {"increment_error", num(li.increment_error)}, {"martingale_error", num(li.martingale_error)},
                    {"tolerance", li.tolerance}};
        r.summary = "increment error " + format_double(li.increment_error) + ", martingale error " +
                    format_double(li.martingale_error);
        record("log_identity", r);
      }
      if (requested("reconstruction")) {
        CheckResult r;
        r.applicable = false;
        r.detail = {{"reason", "power-utility identity; see log_identity"}};
        record("reconstruction", r);
      }
    } else {
      const ReconstructionReport rc = check_reconstruction_power(*tree, result);
      z_tilde = rc.z_tilde;
      hellinger = rc.hellinger;
      if (requested("reconstruction")) {
        CheckResult r;
        r.pass = rc.pass;
        r.detail = {{"max_error", num(rc.max_error)},
                    {"worst_node", rc.worst_node},
                    {"max_step_identity_error", num(rc.max_step_identity_error)},
                    {"max_view_discrepancy", num(rc.max_view_discrepancy)},
                    {"max_density_defect", num(rc.max_density_defect)},
                    {"tolerance", rc.tolerance}};
        r.summary = "reconstruction error " + format_double(rc.max_error) + " at node " + std::to_string(rc.worst_node);
        record("reconstruction", r);
      }
      if (requested("log_identity")) {
        CheckResult r;
        r.applicable = false;
        r.detail = {{"reason", "log-utility identity; see reconstruction"}};
        record("log_identity", r);
      }
    }
    if (requested("verify")) record("verify", run_verify(*tree, result, cfg.run));
    if (requested("mhm")) record("mhm", run_mhm(*tree, result, cfg.run));
    if (requested("closed_form_crosscheck")) record("closed_form_crosscheck", run_closed_form(*tree, *spec, result));
  } catch (const ValidationError& e) {
    return error_report(kExitSchema, "schema", std::string("field 'run': ") + e.what(),
                        {{"field", "run"}, {"line", line_of(config_text, "run")}});
  } catch (const DomainError& e) {
    return error_report(kExitSolver, "solver", e.what());
  }

  report["checks"] = checks;
  out.exit_code = all_pass ? kExitOk : kExitCheckFailed;
  report["verdict"] = all_pass ? "pass" : "fail";
  report["exit_code"] = out.exit_code;
  out.report_json = report.dump(2) + "\n";
  out.result_csv = render_csv(*tree, result, z_tilde, hellinger);
  out.plot_csv = emit_plot_data(*tree, result, hellinger);
  out.message = all_pass ? "all requested checks pass" : first_failure;
  return out;
}

ScenarioOutcome run_scenario(const std::string& config_path, const std::string& out_dir,
                             const RunOverrides& overrides, bool plot_data) {
  std::ifstream in(config_path);
  if (!in) {
    ScenarioOutcome out;
    out.exit_code = kExitSchema;
    out.message = "cannot read " + config_path;
    return out;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  ScenarioOutcome out = run_scenario_text(buf.str(), overrides);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    f << body;
    if (!f) throw std::runtime_error("cannot write " + (fs::path(out_dir) / name).string());
  };
  write("report.json", out.report_json);
  if (!out.result_csv.empty()) write("result.csv", out.result_csv);
  if (plot_data && !out.plot_csv.empty()) write("plot_data.csv", out.plot_csv);
  return out;
}

std::string emit_plot_data(const MarketTree& tree, const ForwardUtilityResult& result,
                           const HellingerIncrements& hellinger) {
  const int d = tree.dimension();
  const bool log = result.risk_aversion.is_log();
  const AdaptedProcess wealth = wealth_process(1.0, result.theta_hat, tree);
  std::ostringstream out;
  out << "time,quantity,path_id,value\n";
  const auto leaves = tree.leaves();
  for (NodeId leaf : leaves) {
    const std::vector<NodeId> path = tree.path_to(leaf);
    const std::size_t path_id = leaf - leaves.first;
    for (int t = 1; t <= tree.horizon(); ++t) {
      const NodeId n = path[static_cast<std::size_t>(t)];
      const NodeId parent = path[static_cast<std::size_t>(t - 1)];
      auto row = [&](const std::string& q, double v) {
        out << t << ',' << q << ',' << path_id << ',' << format_double(v) << '\n';
      };
      if (log) {
        row("D_hat", result.d_hat[n]);
        row("D_bar", result.d_bar[n]);
      } else {
        row("D", result.d[n]);
      }
      row("wealth", wealth[n]);
      for (int i = 0; i < d; ++i) {
        row(d == 1 ? "theta_hat" : "theta_hat_" + std::to_string(i + 1), result.theta_hat.at(parent)(i));
      }
      row("h_cumulative", hellinger.cumulative[n]);
    }
  }
  return out.str();
}

std::string export_explicit_market(const MarketTree& tree) {
  ojson m;
  m["kind"] = "explicit";
  m["dimension"] = tree.dimension();
  m["s0"] = to_json(tree.node(kRoot).s);
  ojson nodes = ojson::array();
  for (NodeId id = 1; id < tree.size(); ++id) {
    const Node& n = tree.node(id);
    nodes.push_back({{"id", id},
                     {"parent", *n.parent},
                     {"prob", n.branch_probability},
                     {"delta_s", to_json(n.delta_s)},
                     {"s", to_json(n.s)}});
  }
  m["nodes"] = nodes;
  return m.dump(2) + "\n";
}

}  // namespace hara
