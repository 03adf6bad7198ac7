import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperstab.errors import NoConvergence, ValidationError
from hyperstab.feedback.closure import (
    BoundaryClosure,
    boundary_closure,
    check_compatibility,
    linear_sample_positions,
)
from hyperstab.feedback.ramps import Ramp, build_ramps
from hyperstab.feedback.synthesis import synthesize_linear
from hyperstab.runner.scenario_runner import prepare
from hyperstab.scenario import parse_scenario
from hyperstab.solver.grid import StateGrid
from hyperstab.tests.fake_data import *


def test_ramp_endpoints():
    ramp = Ramp(0.3, -1.2, 0.1)
    assert ramp(0.0) == pytest.approx(0.3)
    assert ramp.derivative(0.0) == pytest.approx(-1.2)
    assert ramp(0.1) == 0.0
    assert ramp.derivative(0.1) == 0.0
    assert ramp(0.5) == 0.0
    assert abs(ramp.derivative(0.1 - 1e-12)) < 1e-8
    assert not ramp.is_zero
    assert Ramp(0.0, 0.0, 0.1).is_zero


def test_ramp_width():
    with pytest.raises(ValidationError):
        Ramp(1.0, 0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(
    value=st.floats(-1.0, 1.0),
    slope=st.floats(-10.0, 10.0),
    width=st.floats(0.01, 1.0),
)
def test_ramp_is_c1_at_junction(value, slope, width):
    ramp = Ramp(value, slope, width)
    eps = 1e-9 * width
    size = 1.0 + abs(value) + abs(slope)
    assert abs(ramp(width - eps)) <= 1e-6 * size
    assert abs(ramp.derivative(width - eps)) <= 1e-6 * size / width


def test_build_ramps_from_boundary_trace():
    ramps = build_ramps(SINE_K1M2, K1M2, delta=0.2)
    assert ramps.active_until == pytest.approx(0.1)
    # w3 = sin(pi x): zero at x=1 with slope -pi, carried at speed 2.
    zeta = ramps.pairs[2].zeta
    assert zeta(0.0) == pytest.approx(0.0, abs=1e-15)
    assert zeta.derivative(0.0) == pytest.approx(-2.0 * np.pi)
    assert ramps.eta(2, 0.0) == pytest.approx(1.0)
    assert ramps.eta(2, 0.1) == 0.0
    with pytest.raises(ValidationError):
        build_ramps(SINE_K1M2, K1M2, delta=0.0)


def test_linear_sample_positions():
    law = synthesize_linear(B_K1M2)
    positions = linear_sample_positions(K1M2, law)
    assert set(positions) == {2}
    np.testing.assert_allclose(positions[2], [0.5])


def test_linear_closure():
    law = synthesize_linear(B_K1M2)
    x = np.linspace(0.0, 1.0, 201)
    values = np.stack([np.zeros_like(x), x, np.ones_like(x)])
    closure = BoundaryClosure(K1M2, law, dx=x[1] - x[0])
    assert closure.mode == "linear"
    # w2 is uncontrolled; w3(t,1) = -0.5 w2(t, 1/2).
    np.testing.assert_allclose(closure(0.3, values), [0.0, -0.25])
    state = StateGrid(values=values, time=0.3)
    np.testing.assert_allclose(boundary_closure(0.3, state, law, K1M2), [0.0, -0.25])


def test_compatibility():
    assert check_compatibility(BUMP_K1M2, K1M2).ok
    report = check_compatibility(SINE_K1M2, K1M2)
    assert report.residual0 == pytest.approx(0.0, abs=1e-12)
    # -lambda_1 w1'(0) - (lambda_2 w2'(0) + 2 lambda_3 w3'(0)) = -pi - 2 pi - 4 pi
    assert report.residual1 == pytest.approx(7.0 * np.pi)
    assert not report.ok


def test_compatibility_from_grid():
    state = BUMP_K1M2.sample(201)
    report = check_compatibility(state, K1M2)
    assert report.residual0 == 0.0
    assert report.residual1 < 5e-3


def test_nonlinear_closure_ramps_in_feedback():
    prepared = prepare(parse_scenario(CONFIG_DIR / "quasilinear.yaml"))
    law = prepared.law
    closure = BoundaryClosure(prepared.system, law, sampling="frozen", dx=0.01)
    assert closure.mode == "nonlinear"
    values = prepared.w0.sample(101).values
    # The data vanish at x=1, so the controls start at zero.
    np.testing.assert_allclose(closure(0.0, values), [0.0, 0.0], atol=1e-15)
    # Past delta/2 the uncontrolled w2 is zero and w3 = M(w2 near x=1/2).
    peak = 0.0392232 / 16.0
    late = closure(0.15, values)
    assert late[0] == 0.0
    assert late[1] == pytest.approx(-1.0 + np.sqrt(1.0 - peak), abs=1e-5)


def quasilinear_closures():
    prepared = prepare(parse_scenario(CONFIG_DIR / "quasilinear.yaml"))
    frozen = BoundaryClosure(prepared.system, prepared.law, sampling="frozen", dx=0.01)
    local = BoundaryClosure(prepared.system, prepared.law, sampling="local_cauchy", dx=0.01)
    return frozen, local, prepared.w0.sample(101).values


def test_local_cauchy_sampling_close_to_frozen():
    frozen, local, values = quasilinear_closures()
    a_frozen = frozen.positions(2, values)
    a_local = local.positions(2, values)
    assert a_frozen[0] == pytest.approx(0.5, abs=1e-6)
    assert a_local[0] == pytest.approx(0.50006034, abs=1e-7)
    # The data move the speeds, so the two readings differ slightly.
    assert a_local[0] - a_frozen[0] > 1e-5
    late = local(0.15, values)
    assert late[0] == 0.0
    assert late[1] == pytest.approx(-0.00122647, abs=2e-8)
    np.testing.assert_allclose(late, frozen(0.15, values), atol=5e-8)


def test_local_cauchy_gives_up_after_step_limit(monkeypatch):
    _, local, values = quasilinear_closures()
    monkeypatch.setattr("hyperstab.feedback.closure.MAX_LOCAL_STEPS", 1)
    with pytest.raises(NoConvergence, match="never reached x=0"):
        local.positions(2, values)


@pytest.mark.parametrize("nx", [10, 19])
def test_local_cauchy_crossing_on_step_boundary(nx):
    # h = 0.45 dx, so the speed-2 characteristic crosses x=0 after a whole number of steps.
    closure = BoundaryClosure(K1M2, synthesize_linear(B_K1M2), sampling="local_cauchy")
    positions = closure._local_cauchy_positions(2, [1], np.zeros((3, nx)))
    assert positions[0] == pytest.approx(0.5, abs=1e-9)
