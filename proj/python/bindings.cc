#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <vector>

#include "hara/error.h"
#include "hara/forward_synthesis.h"
#include "hara/hellinger.h"
#include "hara/kernels.h"
#include "hara/optimizer.h"
#include "hara/scenario.h"
#include "hara/verifier.h"

namespace py = pybind11;
using namespace hara;

namespace {

std::vector<double> to_list(const AdaptedProcess& x) { return {x.values().begin(), x.values().end()}; }

// theta_hat as {node_id: [theta_1, ...]} over internal nodes.
py::dict theta_dict(const MarketTree& t, const PredictableProcess& theta) {
  py::dict out;
  for (NodeId id : t.internal_nodes()) {
    const Vector& v = theta.at(id);
    out[py::int_(id)] = std::vector<double>(v.data(), v.data() + v.size());
  }
  return out;
}

py::dict result_dict(const MarketTree& t, const ForwardUtilityResult& r) {
  py::dict out;
  out["log"] = r.risk_aversion.is_log();
  if (r.risk_aversion.is_log()) {
    out["d_hat"] = to_list(r.d_hat);
    out["d_bar"] = to_list(r.d_bar);
  } else {
    out["d"] = to_list(r.d);
  }
  out["theta_hat"] = theta_dict(t, r.theta_hat);
  out["z_d"] = to_list(r.z_d);
  out["a_d"] = to_list(r.a_d);
  return out;
}

py::dict verification_dict(const VerificationReport& rep) {
  py::dict out;
  out["pass"] = rep.pass;
  out["martingale_max_error"] = rep.martingale_max_error;
  out["supermartingale_worst_violation"] = rep.supermartingale_worst_violation;
  out["strategies_tested"] = rep.strategies_tested;
  return out;
}

MarketTree binomial(int horizon, double s0, const std::vector<double>& xi_u, const std::vector<double>& xi_d,
                    const std::vector<double>& prob_up) {
  return MarketTree::Binomial(horizon, s0, xi_u, xi_d, prob_up);
}

}  // namespace

PYBIND11_MODULE(_hara_forward, m) {
  m.doc() = "HARA forward utilities on discrete market trees";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  py::class_<MarketTree>(m, "MarketTree")
      .def_static("binomial", &binomial, py::arg("horizon"), py::arg("s0"), py::arg("xi_u"), py::arg("xi_d"),
                  py::arg("prob_up"))
      .def_property_readonly("horizon", &MarketTree::horizon)
      .def_property_readonly("dimension", &MarketTree::dimension)
      .def_property_readonly("leaf_count", &MarketTree::leaf_count)
      .def("__len__", &MarketTree::size)
      .def("price", [](const MarketTree& t, NodeId id) {
        const Vector& s = t.node(id).s;
        return std::vector<double>(s.data(), s.data() + s.size());
      });

  m.def(
      "synthesize_power",
      [](const MarketTree& t, double p, const std::vector<double>& d_terminal) {
        return result_dict(t, synthesize_power(t, HaraSpec::Power(p, d_terminal)));
      },
      py::arg("tree"), py::arg("p"), py::arg("d_terminal"));
  m.def(
      "synthesize_log",
      [](const MarketTree& t, const std::vector<double>& d_hat, const std::vector<double>& d_bar) {
        return result_dict(t, synthesize_log(t, HaraSpec::Log(d_hat, d_bar)));
      },
      py::arg("tree"), py::arg("d_hat_terminal"), py::arg("d_bar_terminal"));

  // Synthesizes the field and runs the sampled verifier on it.
  m.def(
      "verify_power",
      [](const MarketTree& t, double p, const std::vector<double>& d_terminal, std::vector<double> x0,
         int n_random_strategies, std::uint64_t seed) {
        const ForwardUtilityResult r = synthesize_power(t, HaraSpec::Power(p, d_terminal));
        return verification_dict(
            verify_forward(t, RandomFieldUtility::FromResult(r), r.theta_hat, x0, n_random_strategies, seed));
      },
      py::arg("tree"), py::arg("p"), py::arg("d_terminal"), py::arg("x0") = std::vector<double>{0.5, 1.0, 10.0},
      py::arg("n_random_strategies") = 1000, py::arg("seed") = 0);

  m.def(
      "hellinger_increments",
      [](const MarketTree& t, double p, const std::vector<double>& d_terminal) {
        const ForwardUtilityResult r = synthesize_power(t, HaraSpec::Power(p, d_terminal));
        const ReconstructionReport rc = check_reconstruction_power(t, r);
        py::dict out;
        out["increments"] = to_list(rc.hellinger.increments);
        out["reconstruction_error"] = rc.max_error;
        out["pass"] = rc.pass;
        return out;
      },
      py::arg("tree"), py::arg("p"), py::arg("d_terminal"));

  m.def(
      "binomial_power_closed_form",
      [](double xi_u, double xi_d, double s_prev, double q_up, double p) {
        const BinomialPowerSolution s = binomial_power_closed_form(xi_u, xi_d, s_prev, q_up, p);
        return py::make_tuple(s.theta_hat, s.gamma);
      },
      py::arg("xi_u"), py::arg("xi_d"), py::arg("s_prev"), py::arg("q_up"), py::arg("p"));
  m.def("binomial_log_closed_form", &binomial_log_closed_form, py::arg("xi_u"), py::arg("xi_d"),
        py::arg("s_prev"), py::arg("q_up"));

  m.def("f_q", [](double q, double x) { return f_q(q, x).to_double(); }, py::arg("q"), py::arg("x"));
  m.def("k_p", [](double p, double y) { return k_p(p, y).to_double(); }, py::arg("p"), py::arg("y"));

  // Full scenario pipeline on JSON text; returns (exit_code, message, result_csv, report_json).
  m.def(
      "run_scenario_text",
      [](const std::string& text) {
        const ScenarioOutcome o = run_scenario_text(text);
        return py::make_tuple(o.exit_code, o.message, o.result_csv, o.report_json);
      },
      py::arg("config_text"));
}
