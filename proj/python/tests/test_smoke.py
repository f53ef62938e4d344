import json
import math

import pytest

import hara_forward as hf


def worked_tree():
    return hf.MarketTree.binomial(1, 1.0, [1.2], [0.9], [0.5])


def test_worked_power_step():
    r = hf.synthesize_power(worked_tree(), 0.5, [1.0, 1.0])
    assert r["theta_hat"][0][0] == pytest.approx(5.0, abs=1e-12)
    assert r["d"][0] == pytest.approx(3.0 / (2.0 * math.sqrt(2.0)), abs=1e-14)


def test_worked_log_step():
    r = hf.synthesize_log(worked_tree(), [1.0, 1.0], [0.0, 0.0])
    assert r["theta_hat"][0][0] == pytest.approx(2.5, abs=1e-12)
    assert r["d_bar"][0] == pytest.approx(0.5 * math.log(1.5) + 0.5 * math.log(0.75), abs=1e-14)


def test_closed_form_matches_solver():
    theta, _ = hf.binomial_power_closed_form(1.3, 0.8, 1.0, 0.6, -1.5)
    tree = hf.MarketTree.binomial(1, 1.0, [1.3], [0.8], [0.6])
    r = hf.synthesize_power(tree, -1.5, [-1.0, -1.0])
    assert r["theta_hat"][0][0] == pytest.approx(theta, rel=1e-10)


def test_hellinger_increment_and_verifier():
    h = hf.hellinger_increments(worked_tree(), 0.5, [1.0, 1.0])
    assert h["increments"][0] == pytest.approx(0.0625, abs=1e-15)
    assert h["pass"]
    tree = hf.MarketTree.binomial(3, 1.0, [1.2, 1.1, 1.3], [0.9, 0.95, 0.8], [0.5, 0.6, 0.4])
    rep = hf.verify_power(tree, -1.0, [-1.0] * tree.leaf_count, n_random_strategies=200, seed=7)
    assert rep["pass"]
    assert rep["strategies_tested"] == 203


def test_kernel_boundary():
    assert hf.f_q(0.5, -1.5) == math.inf
    assert hf.f_q(0.5, 0.0) == 0.0


def test_errors_are_python_exceptions():
    with pytest.raises(ValueError):
        hf.MarketTree.binomial(1, 1.0, [1.2], [1.1], [0.5])
    with pytest.raises(ValueError):
        hf.synthesize_power(worked_tree(), 0.5, [1.0, -1.0])


def test_scenario_text():
    config = {
        "market": {"kind": "binomial", "T": 1, "s0": 1.0, "xi_u": 1.2, "xi_d": 0.9, "prob_up": 0.5},
        "utility": {"kind": "power", "p": 0.5, "terminal_D": 1.0},
        "run": {"seed": 1, "n_random_strategies": 50, "n_competitor_densities": 20},
    }
    code, _, csv, report = hf.run_scenario_text(json.dumps(config))
    assert code == 0
    assert csv.startswith("depth,node_id,")
    assert json.loads(report)["verdict"] == "pass"
    code, *_ = hf.run_scenario_text("{}")
    assert code == 2
