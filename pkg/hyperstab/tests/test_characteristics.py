import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperstab.characteristics import (
    FlowQuery,
    compute_timing,
    delay_derivative_bounds,
    delay_map,
    delay_maps_on_grid,
    flow,
    flow_many,
    frozen_delay_maps,
    gcd_speed,
    optimal_time,
    positive_pairs,
    transit_time,
)
from hyperstab.tests.fake_data import *


def test_timing_k1m1():
    timing = compute_timing(K1M1)
    np.testing.assert_allclose(timing.tau, [1.0, 1.0])
    assert timing.t_opt == pytest.approx(2.0)


def test_timing_k1m2():
    timing = compute_timing(K1M2)
    np.testing.assert_allclose(timing.tau, [1.0, 1.0, 0.5])
    assert timing.t_opt == pytest.approx(1.5)


def test_timing_fewer_controls():
    timing = compute_timing(K2M1)
    np.testing.assert_allclose(timing.tau, [0.5, 1.0, 1.0])
    assert timing.t_opt == pytest.approx(2.0)


def test_optimal_time_square():
    assert optimal_time(2, 2, np.array([0.5, 1.0, 1.0, 0.5])) == pytest.approx(1.5)
    # The slowest controlled family alone can dominate.
    assert optimal_time(1, 2, np.array([0.1, 3.0, 0.2])) == pytest.approx(3.0)


def test_timing_variable_speed():
    timing = compute_timing(K1M2_RAMPED)
    np.testing.assert_allclose(timing.tau[1:], [np.log(2.0), np.log(4.0 / 3.0)], rtol=1e-12)


def test_transit_time_variable_speed():
    assert transit_time(K1M2_RAMPED, 1, 1.0) == pytest.approx(np.log(2.0), abs=1e-10)
    assert transit_time(K1M2_RAMPED, 2, 0.5) == pytest.approx(np.log(3.5 / 3.0), abs=1e-10)
    assert transit_time(K1M2_RAMPED, 1, 0.0) == 0.0
    with pytest.raises(ValueError):
        transit_time(K1M2_RAMPED, 0, 0.5)


def test_flow_constant_speed():
    # Rightward family: x grows with time.
    assert flow(K1M2, FlowQuery(family=0, t=0.5, s=0.0, xi=0.25)) == pytest.approx(0.75)
    # Leftward family: x shrinks with time.
    assert flow(K1M2, FlowQuery(family=2, t=0.25, s=0.0, xi=1.0)) == pytest.approx(0.5)


def test_delay_map_constant_speed():
    assert delay_map(K1M2, 1, 2, 1.0) == pytest.approx(0.5)
    assert delay_map(K1M2, 1, 2, 0.0) == 0.0
    with pytest.raises(ValueError):
        delay_map(K1M2, 2, 1, 0.5)


def test_delay_map_variable_speed():
    # tau(3, x) = log((3 + x) / 3) and the family-2 flow from 0 is e^t - 1.
    for x in (0.25, 0.5, 1.0):
        expected = (3.0 + x) / 3.0 - 1.0
        assert delay_map(K1M2_RAMPED, 1, 2, x) == pytest.approx(expected, abs=1e-9)


def test_delay_map_anchor_is_time_shift_invariant():
    tau = transit_time(K1M2_RAMPED, 2, 0.75)
    shifted = flow_many(K1M2_RAMPED, 1, -tau, 0.0, 0.0)
    assert float(shifted) == pytest.approx(delay_map(K1M2_RAMPED, 1, 2, 0.75), abs=1e-12)


def test_delay_maps_on_grid_match_pointwise():
    x = np.linspace(0.0, 1.0, 9)
    maps = delay_maps_on_grid(K1M2_RAMPED, x)
    assert set(maps) == {(1, 2)}
    pointwise = [delay_map(K1M2_RAMPED, 1, 2, xi) for xi in x]
    np.testing.assert_allclose(maps[(1, 2)], pointwise, atol=1e-12)
    assert np.all(np.diff(maps[(1, 2)]) > 0)
    assert np.all((maps[(1, 2)] >= 0.0) & (maps[(1, 2)] <= 1.0))


def test_frozen_maps_at_zero_state():
    x = np.linspace(0.0, 1.0, 101)
    maps = frozen_delay_maps(K1M2, x, np.zeros((3, 101)), positive_pairs(K1M2))
    np.testing.assert_allclose(maps[(1, 2)], 0.5 * x, atol=1e-12)
    at_one = frozen_delay_maps(K1M2, x, np.zeros((3, 101)), [(1, 2)], at=[1.0])
    np.testing.assert_allclose(at_one[(1, 2)], [0.5])


def test_derivative_bounds():
    assert delay_derivative_bounds(K1M2, [(1, 2)])[(1, 2)] == pytest.approx((0.5, 0.5))
    c1, c2 = delay_derivative_bounds(K1M2_RAMPED, [(1, 2)])[(1, 2)]
    assert c1 == pytest.approx(1.0 / 4.0)
    assert c2 == pytest.approx(2.0 / 3.0)


def test_gcd_speed():
    assert gcd_speed(K1M2) == pytest.approx(1.0)
    assert gcd_speed(make_system(1, 2, [(2.0,), (1.0,), (1.5,)], B_K1M2)) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(
    family=st.sampled_from([0, 1, 2]),
    s=st.floats(0.0, 1.0),
    t1=st.floats(0.0, 1.0),
    t2=st.floats(0.0, 1.0),
    xi=st.floats(0.0, 1.0),
)
def test_flow_group_property(family, s, t1, t2, xi):
    direct = flow_many(K1M2_RAMPED, family, t2, s, xi)
    middle = flow_many(K1M2_RAMPED, family, t1, s, xi)
    composed = flow_many(K1M2_RAMPED, family, t2, t1, middle)
    assert float(composed) == pytest.approx(float(direct), abs=1e-8)
