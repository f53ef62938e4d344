#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "hara/error.h"
#include "hara/scenario.h"
#include "json.hpp"

namespace hara {
namespace {

using nlohmann::json;

std::string ScenarioDir() {
  const char* dir = std::getenv("HARA_SCENARIO_DIR");
  return dir ? dir : "scenarios";
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string Scenario(const std::string& name) { return ReadFile(ScenarioDir() + "/" + name); }

std::vector<std::vector<std::string>> ParseCsv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const char* kWorked = R"({
  "market": {"kind": "binomial", "T": 1, "s0": 1.0, "xi_u": 1.2, "xi_d": 0.9, "prob_up": 0.5},
  "utility": {"kind": "power", "p": 0.5, "terminal_D": 1.0},
  "run": {"seed": 1, "n_random_strategies": 50, "n_competitor_densities": 20}
})";

TEST(Parse, DefaultsAndBroadcast) {
  const ScenarioConfig c = parse_scenario(kWorked);
  EXPECT_EQ(c.market.horizon, 1);
  EXPECT_EQ(c.run.n_random_strategies, 50);
  EXPECT_EQ(c.run.tol_foc, 1e-12);
  EXPECT_EQ(c.run.checks, kAllChecks);
  EXPECT_EQ(c.run.x0, (std::vector<double>{0.5, 1.0, 10.0}));
  const MarketTree t = build_market(c.market);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(build_spec(c.utility, t).d_terminal(), (std::vector<double>{1.0, 1.0}));
}

TEST(Parse, ErrorsNameFieldAndLine) {
  const std::string text = "{\n  \"market\": {\"kind\": \"binomial\", \"T\": 1, \"s0\": 1.0,\n"
                           "    \"xi_u\": [1.2], \"xi_d\": [\"x\"], \"prob_up\": [0.5]},\n"
                           "  \"utility\": {\"kind\": \"power\", \"p\": 0.5}\n}";
  try {
    parse_scenario(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "market.xi_d[0]");
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("market.xi_d[0]"), std::string::npos);
  }
  EXPECT_THROW(parse_scenario("{\"market\": {}, \"utility\": {}, \"bogus\": 1}"), ConfigError);
  EXPECT_THROW(parse_scenario("not json"), ConfigError);
}

TEST(Run, WorkedInstanceCsv) {
  const ScenarioOutcome out = run_scenario_text(kWorked);
  ASSERT_EQ(out.exit_code, kExitOk) << out.message;
  const auto rows = ParseCsv(out.result_csv);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"depth", "node_id", "S", "D", "theta_hat", "wealth",
                                               "z_tilde_ratio", "hellinger_increment"}));
  EXPECT_NEAR(std::stod(rows[1][3]), 3.0 / (2.0 * std::sqrt(2.0)), 1e-15);
  EXPECT_NEAR(std::stod(rows[1][4]), 5.0, 1e-12);
  EXPECT_NEAR(std::stod(rows[1][7]), 0.0625, 1e-15);
  EXPECT_NEAR(std::stod(rows[2][5]), 2.0, 1e-12);
  EXPECT_NEAR(std::stod(rows[2][6]), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(std::stod(rows[3][6]), 4.0 / 3.0, 1e-15);
  const json rep = json::parse(out.report_json);
  EXPECT_EQ(rep["verdict"], "pass");
  EXPECT_EQ(rep["checks"]["log_identity"]["verdict"], "not_applicable");
  EXPECT_EQ(rep["checks"]["closed_form_crosscheck"]["verdict"], "pass");
}

TEST(Run, ShippedScenarios) {
  EXPECT_EQ(run_scenario_text(Scenario("one_period_power.json")).exit_code, kExitOk);
  EXPECT_EQ(run_scenario_text(Scenario("one_period_log.json")).exit_code, kExitOk);
  const ScenarioOutcome tri = run_scenario_text(Scenario("trinomial_two_period.json"));
  EXPECT_EQ(tri.exit_code, kExitOk) << tri.message;
  EXPECT_EQ(json::parse(tri.report_json)["checks"]["closed_form_crosscheck"]["verdict"], "not_applicable");

  const ScenarioOutcome bad = run_scenario_text(Scenario("bad_xi_d.json"));
  EXPECT_EQ(bad.exit_code, kExitSchema);
  EXPECT_NE(bad.message.find("market.xi_d[0]"), std::string::npos) << bad.message;
  EXPECT_EQ(json::parse(bad.report_json)["error"]["line"], 7);
  EXPECT_TRUE(bad.result_csv.empty());

  const ScenarioOutcome adv = run_scenario_text(Scenario("adversarial.json"));
  EXPECT_EQ(adv.exit_code, kExitCheckFailed);
  const json rep = json::parse(adv.report_json);
  EXPECT_EQ(rep["checks"]["verify"]["verdict"], "fail");
}

TEST(Run, SolverFailureExitsWithThree) {
  const char* text = R"({
    "market": {"kind": "explicit", "dimension": 1, "s0": [1.0], "nodes": [
      {"id": 1, "parent": 0, "prob": 0.5, "delta_s": [0.1]},
      {"id": 2, "parent": 0, "prob": 0.5, "delta_s": [0.2]}]},
    "utility": {"kind": "power", "p": -1.0, "terminal_D": -1.0}
  })";
  const ScenarioOutcome out = run_scenario_text(text);
  EXPECT_EQ(out.exit_code, kExitSolver);
  EXPECT_EQ(json::parse(out.report_json)["error"]["node"], 0);
}

TEST(Run, OverridesAndUnknownCheck) {
  RunOverrides o;
  o.checks = std::vector<std::string>{"verify"};
  const json rep = json::parse(run_scenario_text(kWorked, o).report_json);
  EXPECT_TRUE(rep["checks"].contains("verify"));
  EXPECT_FALSE(rep["checks"].contains("mhm"));
  o.checks = std::vector<std::string>{"nope"};
  EXPECT_EQ(run_scenario_text(kWorked, o).exit_code, kExitSchema);
}

TEST(Run, DeterministicArtifacts) {
  const std::string text = Scenario("trinomial_two_period.json");
  const ScenarioOutcome a = run_scenario_text(text), b = run_scenario_text(text);
  EXPECT_EQ(a.result_csv, b.result_csv);
  EXPECT_EQ(a.report_json, b.report_json);
  RunOverrides o;
  o.seed = 12345;
  EXPECT_NE(run_scenario_text(text, o).report_json, a.report_json);
}

TEST(Export, RoundTripsExactly) {
  const std::string text = Scenario("adversarial.json");
  const ScenarioConfig cfg = parse_scenario(text);
  const MarketTree t = build_market(cfg.market);
  json doc = json::parse(text);
  doc["market"] = json::parse(export_explicit_market(t));
  const ScenarioConfig back = parse_scenario(doc.dump());
  const MarketTree t2 = build_market(back.market);
  EXPECT_TRUE(t2.same_as(t, 0.0));
  EXPECT_EQ(run_scenario_text(doc.dump()).result_csv, run_scenario_text(text).result_csv);
}

TEST(PlotData, LongFormatJoinsResultCsv) {
  const ScenarioOutcome out = run_scenario_text(Scenario("adversarial.json"));
  const auto rows = ParseCsv(out.plot_csv);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"time", "quantity", "path_id", "value"}));
  // 4 paths x 2 times x {D, wealth, theta_hat, h_cumulative}.
  EXPECT_EQ(rows.size() - 1, 4u * 2u * 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].size(), 4u);

  // D along path 0 at time 2 equals D at the first leaf.
  const auto result = ParseCsv(out.result_csv);
  std::map<std::string, std::string> leaf0;
  for (std::size_t c = 0; c < result[0].size(); ++c) leaf0[result[0][c]] = result[4][c];
  bool seen = false;
  for (const auto& r : rows) {
    if (r[0] == "2" && r[1] == "D" && r[2] == "0") {
      EXPECT_EQ(r[3], leaf0["D"]);
      seen = true;
    }
  }
  EXPECT_TRUE(seen);
}

TEST(Files, RunScenarioWritesArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "hara_scenario_test";
  std::filesystem::remove_all(dir);
  const ScenarioOutcome out =
      run_scenario(ScenarioDir() + "/one_period_log.json", dir.string(), {}, /*plot_data=*/true);
  EXPECT_EQ(out.exit_code, kExitOk);
  EXPECT_EQ(ReadFile((dir / "result.csv").string()), out.result_csv);
  EXPECT_EQ(ReadFile((dir / "report.json").string()), out.report_json);
  EXPECT_TRUE(std::filesystem::exists(dir / "plot_data.csv"));
  EXPECT_EQ(run_scenario("/nonexistent.json", dir.string()).exit_code, kExitSchema);
}

TEST(Format, SeventeenDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

}  // namespace
}  // namespace hara
