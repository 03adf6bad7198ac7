import json
from types import SimpleNamespace

import numpy as np
import pytest

from hyperstab.runner.suite import (
    DECAY_CELLS,
    SCENARIOS,
    Claim,
    VerificationSuite,
    build_scenario,
    format_report,
    write_report,
)
from hyperstab.system_model import validate_system


@pytest.fixture
def suite(tmp_path):
    return VerificationSuite(tmp_path, seed=0)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_builtin_scenarios_are_valid(name):
    scenario = build_scenario(name)
    assert scenario.name == name
    assert validate_system(scenario.build_system()).ok


def test_build_scenario_overrides_solver():
    assert build_scenario("k1m1", solver="exact").numerics.solver == "exact"
    assert build_scenario("k1m2", horizon=3.0).horizon == 3.0


def test_unknown_suite(suite):
    with pytest.raises(ValueError, match="unknown suite"):
        suite.run("everything")


def test_plug_in_claim(suite):
    claim = suite.check_plug_in()
    assert claim.passed, claim.summary
    assert claim.details["matrices"] > 0


def test_delay_derivative_claim(suite):
    claim = suite.check_delay_derivative()
    assert claim.passed, claim.summary


def test_exact_vanishing_claim(suite):
    claim = suite.check_exact_vanishing()
    assert claim.passed, claim.summary


def test_equivalence_claim(suite):
    claim = suite.check_equivalence()
    assert claim.passed, claim.summary
    assert claim.details["lambda_star"] == pytest.approx(24.0)
    low, high = claim.details["fitted_interval_q2"]
    assert low == pytest.approx(1.0 / high)
    assert 1.0 <= high < claim.details["lambda_star"]
    assert set(claim.details["ratios_by_q"]) == {"1", "2", "4", "8"}


@pytest.mark.slow
@pytest.mark.parametrize(
    "check",
    [
        "check_upwind_convergence",
        "check_decay",
        "check_envelope",
        "check_weights",
        "check_quasilinear",
        "check_fewer_controls",
    ],
)
def test_closed_loop_claims(suite, check):
    claim = getattr(suite, check)()
    assert claim.passed, claim.summary


def test_report_files(tmp_path):
    claims = [
        Claim(criterion=1, name="plug-in consistency", passed=True, summary="ok"),
        Claim(criterion=9, name="quasilinear", passed=False, summary="late", details={"t": 1.5}),
    ]
    text = format_report(claims)
    assert "[PASS]  1 plug-in consistency: ok" in text
    assert "[FAIL]  9 quasilinear: late" in text
    assert text.endswith("1/2 claims hold\n")

    text_path, json_path = write_report(tmp_path, claims)
    assert text_path.read_text() == text
    data = json.loads(json_path.read_text())
    assert not data["passed"]
    assert data["claims"][1]["details"] == {"t": 1.5}


def test_decay_cells_cover_both_solvers():
    assert len(DECAY_CELLS) == 24
    upwind = {(name, L, q) for name, solver, L, q in DECAY_CELLS if solver == "upwind"}
    exact = {(name, L, q) for name, solver, L, q in DECAY_CELLS if solver == "exact"}
    assert upwind == exact
    assert {name for name, _, _ in upwind} == {"k1m1", "k1m2"}


def test_decay_claim_runs_every_cell(suite, monkeypatch):
    ran = []

    def fake_cell(name, solver, Lambda, q, nx):
        ran.append((name, solver, Lambda, q))
        decay = SimpleNamespace(passed=True, worst_margin=-0.1, checked=10)
        return SimpleNamespace(gamma=2.0, decay=decay)

    monkeypatch.setattr(suite, "run_cell", fake_cell)
    claim = suite.check_decay()
    assert claim.passed
    assert ran == list(DECAY_CELLS)
    assert "k1m2/upwind/L4/q1" in claim.details
    assert "over 24 runs" in claim.summary


def test_envelope_claim_reports_both_norms(suite, monkeypatch):
    times = np.linspace(0.0, 2.0, 5)
    columns = {"linf": np.array([1.0, 0.8, 0.6, 0.2, 0.0]), "lq": np.array([1.0, 0.7, 0.5, 0.1, 0.0])}
    trace = SimpleNamespace(times=times, column=lambda norm: columns[norm])
    monkeypatch.setattr(suite, "run_cell", lambda *args: SimpleNamespace(trace=trace))
    claim = suite.check_envelope()
    assert set(claim.details) == {"linf", "lq"}
    assert set(claim.details["lq"]) == {"spread", "1", "2", "4"}
    t_opt = suite.runner("k1m1", "exact").prepared.timing.t_opt
    expected = max(np.exp(4.0 * (times - t_opt)) * columns["lq"])
    assert claim.details["lq"]["4"] == pytest.approx(expected)
    assert "L^q spread" in claim.summary
