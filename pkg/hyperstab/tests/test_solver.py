import numpy as np
import pytest

from hyperstab.errors import CFLViolation, ValidationError
from hyperstab.feedback.synthesis import synthesize_linear
from hyperstab.solver.exact import ExactAdvection
from hyperstab.solver.grid import (
    ComponentProfile,
    InitialData,
    SimulationTrace,
    StateGrid,
    TraceRow,
    lq_norm,
    norms,
)
from hyperstab.solver.simulate import SimulationConfig, simulate
from hyperstab.solver.upwind import check_cfl, hold_controls, step, time_derivative_field
from hyperstab.tests.fake_data import *


def test_component_profile():
    profile = ComponentProfile(sine=(1.0,), poly=(0.0, 2.0))
    x = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(profile.value(x), np.sin(np.pi * x) + 2.0 * x, atol=1e-15)
    np.testing.assert_allclose(profile.slope(x), np.pi * np.cos(np.pi * x) + 2.0)
    samples = ComponentProfile(samples=np.array([0.0, 1.0, 4.0]))
    assert samples.value(np.array([0.25]))[0] == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        ComponentProfile(sine=(1.0,), samples=np.zeros(3))


def test_c1_norm():
    assert BUMP_K2M1.c1_norm() == pytest.approx(1.0 / 16.0 + np.sqrt(3.0) / 9.0, rel=1e-5)
    assert InitialData.zeros(3).c1_norm() == 0.0


def test_state_grid_shape():
    with pytest.raises(ValidationError):
        StateGrid(values=np.zeros((2, 2)))
    state = SINE_K1M1.sample(11)
    assert (state.n, state.nx) == (2, 11)
    assert state.dx == pytest.approx(0.1)


def test_norms():
    x = np.linspace(0.0, 1.0, 101)
    values = np.ones((2, 101))
    assert lq_norm(values, x, 1.0) == pytest.approx(2.0)
    assert lq_norm(values, x, 2.0) == pytest.approx(np.sqrt(2.0))
    row = norms(StateGrid(values=-3.0 * values), q=2.0)
    assert row["linf"] == 3.0
    assert row["l1"] == pytest.approx(6.0)


def test_trace_times_increase():
    trace = SimulationTrace(q=2.0)
    trace.append(TraceRow(t=0.0, l1=1.0, l2=1.0, lq=1.0, linf=1.0))
    with pytest.raises(ValueError):
        trace.append(TraceRow(t=0.0, l1=1.0, l2=1.0, lq=1.0, linf=1.0))
    trace.append(TraceRow(t=0.5, l1=0.5, l2=0.5, lq=0.5, linf=0.25))
    assert trace.value_at("linf", 0.2) == 0.25
    assert trace.max_after("l1", 0.0) == 1.0


def test_cfl():
    check_cfl(K1M2, dt=0.0045, dx=0.01, cfl=0.9)
    with pytest.raises(CFLViolation):
        check_cfl(K1M2, dt=0.01, dx=0.01, cfl=0.9)


def test_time_derivative_field_signs():
    x = np.linspace(0.0, 1.0, 101)
    state = StateGrid(values=np.stack([x, x, x]))
    field = time_derivative_field(state, K1M2)
    np.testing.assert_allclose(field[0], -1.0)
    np.testing.assert_allclose(field[1], 1.0)
    np.testing.assert_allclose(field[2], 2.0)


@pytest.mark.parametrize("scheme", ["upwind", "characteristic"])
def test_step_transports_and_closes_boundaries(scheme):
    state = StateGrid(values=np.zeros((2, 101)))
    state.values[1, -1] = 1.0
    controls = lambda t, values: np.array([0.0])
    nxt = step(state, K1M1, controls, dt=0.009, scheme=scheme)
    assert nxt.time == pytest.approx(0.009)
    assert nxt.values[1, -1] == 0.0
    # w1(t,0) = 0.8 w2(t,0), still zero at the left edge.
    assert nxt.values[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert nxt.values[1, -2] > 0.5


def test_hold_controls():
    values = np.arange(6.0).reshape(2, 3)
    np.testing.assert_allclose(hold_controls(K1M1)(0.0, values), [5.0])


def test_zero_data_stays_zero():
    law = synthesize_linear(B_K1M2)
    config = SimulationConfig(nx=51, horizon=0.5)
    trace = simulate(K1M2, law, InitialData.zeros(3), config)
    assert np.all(trace.column("linf") == 0.0)
    assert np.all(trace.column("l2") == 0.0)


def test_exact_advection_setup():
    law = synthesize_linear(B_K1M2)
    exact = ExactAdvection(K1M2, law, SINE_K1M2, nx=201)
    assert exact.dt == pytest.approx(0.005)
    assert exact.shifts.tolist() == [1, 1, 2]
    np.testing.assert_allclose(exact.positions[2], [0.5])
    with pytest.raises(ValidationError):
        ExactAdvection(K1M2_RAMPED, law, SINE_K1M2, nx=201)


@pytest.mark.parametrize(
    "system, matrix, w0, t_opt",
    [(K1M1, B_K1M1, SINE_K1M1, 2.0), (K1M2, B_K1M2, SINE_K1M2, 1.5)],
)
def test_exact_vanishing(system, matrix, w0, t_opt):
    law = synthesize_linear(matrix)
    config = SimulationConfig(nx=201, solver="exact", horizon=t_opt + 0.25)
    trace = simulate(system, law, w0, config)
    assert trace.value_at("linf", t_opt - 0.25) > 1e-3
    assert trace.max_after("linf", t_opt) <= 1e-12


@pytest.mark.slow
def test_upwind_residual_shrinks_under_refinement():
    law = synthesize_linear(B_K1M2)
    residuals = []
    for nx in (101, 201, 401):
        config = SimulationConfig(nx=nx, horizon=1.6)
        trace = simulate(K1M2, law, BUMP_K1M2, config)
        residuals.append(trace.value_at("linf", 1.6))
    assert residuals[0] / residuals[1] >= 1.8
    assert residuals[1] / residuals[2] >= 1.8


def test_fewer_controls_vanish():
    law = synthesize_linear(B_K2M1)
    config = SimulationConfig(nx=201, horizon=2.1)
    trace = simulate(K2M1, law, BUMP_K2M1, config)
    assert all(np.all(values == 0.0) for _, values in trace.controls)
    assert trace.value_at("linf", 2.1) <= 10.0 * (1.0 / 16.0) / 200


def from_samples(values: np.ndarray) -> InitialData:
    return InitialData(components=tuple(ComponentProfile(samples=row) for row in values))


def test_exact_left_trace_ignores_data_near_right_edge():
    law = synthesize_linear(B_K1M2)
    nx = 201
    x = np.linspace(0.0, 1.0, nx)
    base = BUMP_K1M2.sample(nx).values
    perturbed = base + np.where(x >= 0.905, x - 0.9, 0.0)
    # Leftward speeds 1 and 2: nothing from [0.9, 1] reaches x=0 before t = 0.45.
    early = (0.1, 0.2, 0.3, 0.4, 0.445)
    config = SimulationConfig(nx=nx, solver="exact", horizon=0.5, snapshot_times=early + (0.47,))
    reference = simulate(K1M2, law, from_samples(base), config)
    changed = simulate(K1M2, law, from_samples(perturbed), config)
    for t in early:
        assert changed.snapshots[t][0, 0] == reference.snapshots[t][0, 0]
    assert changed.snapshots[0.47][0, 0] != reference.snapshots[0.47][0, 0]


def test_zero_state_coupling_matches_linear_path():
    quasi = HyperbolicSystem(
        k=1,
        m=2,
        speeds=tuple(SpeedProfile(base=s.base, state_coupling=(0.0, 0.0, 0.0)) for s in K1M2.speeds),
        coupling=K1M2.coupling,
    )
    assert quasi.is_quasilinear
    law = synthesize_linear(B_K1M2)
    config = SimulationConfig(nx=101, horizon=0.8, snapshot_times=(0.4, 0.8))
    linear = simulate(K1M2, law, BUMP_K1M2, config)
    coupled = simulate(quasi, law, BUMP_K1M2, config)
    for t in (0.4, 0.8):
        assert np.array_equal(coupled.snapshots[t], linear.snapshots[t])
    assert np.array_equal(coupled.column("l2"), linear.column("l2"))
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(coupled.controls, linear.controls))
