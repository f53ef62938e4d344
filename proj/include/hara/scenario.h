#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hara/forward_synthesis.h"
#include "hara/hellinger.h"
#include "hara/tree_market.h"
#include "hara/verifier.h"

namespace hara {

// Schema problem in a scenario file. `field` is a JSON path such as
// "market.xi_d[0]"; `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, int line, const std::string& what);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

struct MarketConfig {
  enum class Kind { kBinomial, kExplicit };
  Kind kind = Kind::kBinomial;
  // Binomial.
  int horizon = 0;
  double s0 = 1.0;
  std::vector<double> xi_u, xi_d, prob_up;
  // Explicit.
  struct ExplicitNode {
    long id = 0;
    long parent = 0;
    double prob = 0.0;
    std::vector<double> delta_s;
    std::optional<std::vector<double>> s;
  };
  int dimension = 1;
  std::vector<double> s0_vector;
  std::vector<ExplicitNode> nodes;
};

struct UtilityConfig {
  bool log = false;
  double p = 0.5;
  // Either one value (constant) or one per leaf.
  std::vector<double> terminal_d;
  std::vector<double> terminal_d_hat;
  std::vector<double> terminal_d_bar;
};

inline const std::vector<std::string> kAllChecks = {"verify", "mhm", "reconstruction", "log_identity",
                                                    "closed_form_crosscheck"};

struct RunConfig {
  double tol_foc = 1e-12;
  double tol_verify = 1e-11;
  int n_random_strategies = 1000;
  int n_competitor_densities = 200;
  std::uint64_t seed = 0;
  std::vector<std::string> checks = kAllChecks;
  std::vector<double> x0 = {0.5, 1.0, 10.0};
  // Multiplies the terminal coefficient (D, or D_hat) at one leaf of the field
  // handed to the verifier, after synthesis.
  struct Adversarial {
    std::size_t leaf = 0;
    double factor = 1.01;
  };
  std::optional<Adversarial> adversarial;
};

struct ScenarioConfig {
  MarketConfig market;
  UtilityConfig utility;
  RunConfig run;
};

// Parses JSON text (comments allowed). Throws ConfigError.
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

// Throws ValidationError on an invalid market (e.g. xi_d outside (0, 1)).
MarketTree build_market(const MarketConfig& market);
// Expands a constant terminal value to all leaves. Throws ValidationError.
HaraSpec build_spec(const UtilityConfig& utility, const MarketTree& tree);

// Command-line overrides applied on top of the config's run section.
struct RunOverrides {
  std::optional<std::vector<std::string>> checks;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_foc;
  std::optional<double> tol_verify;
};

enum ExitCode { kExitOk = 0, kExitCheckFailed = 1, kExitSchema = 2, kExitSolver = 3 };

struct ScenarioOutcome {
  int exit_code = kExitOk;
  // One-line summary (worst margin, failing node, or error).
  std::string message;
  // Empty on schema errors.
  std::string result_csv;
  std::string plot_csv;
  std::string report_json;
};

// Full pipeline on in-memory text: parse, build, synthesize, run the
// requested checks and render the artifacts. Never throws for bad input.
ScenarioOutcome run_scenario_text(const std::string& config_text, const RunOverrides& overrides = {});

// Reads `config_path`, runs the pipeline and writes result.csv and
// report.json (plus plot_data.csv when `plot_data`) into `out_dir`.
ScenarioOutcome run_scenario(const std::string& config_path, const std::string& out_dir,
                             const RunOverrides& overrides = {}, bool plot_data = false);

// Long format: time,quantity,path_id,value for t = 1..T along every
// root-to-leaf path (path_id = leaf index). Quantities: D (or D_hat, D_bar),
// wealth (x0 = 1), theta (theta_1.. for d > 1) and h_cumulative.
std::string emit_plot_data(const MarketTree& tree, const ForwardUtilityResult& result,
                           const HellingerIncrements& hellinger);

// Explicit-market JSON of `tree` (node ids are breadth-first ids), suitable
// for the "market" section of a scenario file.
std::string export_explicit_market(const MarketTree& tree);

// "%.17g".
std::string format_double(double v);

}  // namespace hara
