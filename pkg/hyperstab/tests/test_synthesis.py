import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hyperstab.errors import NoConvergence, SingularSubmatrix
from hyperstab.feedback.synthesis import (
    CLASS_RANGE,
    FULL_RANGE,
    check_class_B,
    synthesize_linear,
    synthesize_nonlinear,
)
from hyperstab.system_model import BoundaryCoupling
from hyperstab.tests.fake_data import *


def test_k1m2_map():
    law = synthesize_linear(B_K1M2)
    assert law.targets == (2,)
    assert law.uncontrolled == (1,)
    fm = law.map_for(2)
    assert fm.inputs == (1,)
    assert fm.rows == (0,)
    np.testing.assert_allclose(fm.coefficients, [-0.5])
    np.testing.assert_allclose(law.evaluate(2, [[0.4], [-1.0]]), [-0.2, 0.5])


def test_k1m1_zero_map():
    law = synthesize_linear(B_K1M1)
    assert law.targets == (1,)
    assert law.uncontrolled == ()
    assert law.map_for(1).inputs == ()
    np.testing.assert_allclose(law.evaluate(1, np.zeros((3, 0))), np.zeros(3))


def test_k2m2_maps():
    law = synthesize_linear(B_K2M2)
    assert law.targets == (2, 3)
    np.testing.assert_allclose(law.map_for(3).coefficients, [-0.75])
    assert law.map_for(2).inputs == ()
    v = law.complete(np.array([1.0, 7.0]), first_target=3)
    np.testing.assert_allclose(v, [1.0, -0.75])
    np.testing.assert_allclose((np.array(B_K2M2) @ v)[1], 0.0, atol=1e-15)


def test_fewer_controls_gives_zero_map():
    law = synthesize_linear(B_K2M1)
    assert law.targets == (2,)
    assert law.map_for(2).inputs == ()
    assert law.class_b.passed
    assert law.class_b.blocks == []
    assert law.class_b.full_block_invertible


def test_singular_full_block():
    with pytest.raises(SingularSubmatrix, match="trailing 1x1 block"):
        synthesize_linear([[0.0]])


def test_class_b_report():
    report = check_class_B([[1.0, 2.0], [3.0, 0.0]])
    assert not report.passed
    assert report.failed_indices() == [1]
    assert report.convention == CLASS_RANGE
    assert report.full_block_invertible
    full = check_class_B(B_K2M2, require_full_block=True)
    assert full.passed
    assert full.convention == FULL_RANGE
    assert [i for i, _, _ in full.blocks] == [1, 2]


def test_missing_map():
    with pytest.raises(KeyError):
        synthesize_linear(B_K1M2).map_for(1)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    shape=st.sampled_from([(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)]),
)
def test_plug_in_consistency(seed, shape):
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal(shape)
    assume(np.linalg.cond(matrix[-min(shape):, -min(shape):]) < 1e4)
    try:
        law = synthesize_linear(matrix)
    except SingularSubmatrix:
        assume(False)
    for fm in law.maps:
        v = law.complete(rng.standard_normal(shape[1]), first_target=fm.target)
        rows = (matrix @ v)[list(fm.rows)]
        scale = np.max(np.abs(matrix)) * np.max(np.abs(v)) + 1.0
        assert np.max(np.abs(rows)) <= 1e-10 * scale


def test_nonlinear_map_solves_quadratic():
    coupling = BoundaryCoupling(np.array(B_K1M2), np.array(QUADRATIC_K1M2))
    law = synthesize_nonlinear(coupling)
    assert law.is_nonlinear
    inputs = np.array([[0.1], [-0.05], [0.0]])
    expected = -1.0 + np.sqrt(1.0 - inputs[:, 0])
    np.testing.assert_allclose(law.evaluate(2, inputs), expected, atol=1e-10)
    grad = law.gradient(2, inputs)[:, 0]
    np.testing.assert_allclose(grad, -0.5 / np.sqrt(1.0 - inputs[:, 0]), rtol=1e-8)


def test_nonlinear_smallness_radius():
    coupling = BoundaryCoupling(np.array(B_K1M2), np.array(QUADRATIC_K1M2))
    synthesize_nonlinear(coupling, anchor=np.array([0.01, 0.0]), radius=0.05)
    with pytest.raises(NoConvergence, match="smallness radius"):
        synthesize_nonlinear(coupling, anchor=np.array([0.1, 0.0]), radius=0.05)
