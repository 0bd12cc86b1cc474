import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grassnrsfm.data_model import (MalformedInputError, MeasurementMatrix, OrderingVector,
                                   ReshuffledShape, RotationStack, ShapeMatrix,
                                   compose_orderings, inverse_reshuffle, is_permutation,
                                   relative_permutation, reorder_columns, reshuffle)


def test_reshuffle_single_entry_is_identity():
    S = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(reshuffle(S), S)


def test_reshuffle_layout_by_hand():
    # frames stacked as [x; y; z] rows, two points
    S = np.array([[11, 12], [21, 22], [31, 32],
                  [13, 14], [23, 24], [33, 34]], dtype=float)
    Ss = reshuffle(S)
    assert Ss.shape == (6, 2)
    np.testing.assert_array_equal(Ss[:, 0], [11, 12, 21, 22, 31, 32])
    np.testing.assert_array_equal(Ss[:, 1], [13, 14, 23, 24, 33, 34])


def test_reshuffle_index_formula(rng):
    F, P = 4, 5
    S = rng.standard_normal((3 * F, P))
    Ss = reshuffle(S)
    for f in range(F):
        for a in range(3):
            for j in range(P):
                assert Ss[a * P + j, f] == S[3 * f + a, j]


def test_inverse_reshuffle_small_and_random(rng):
    np.testing.assert_array_equal(inverse_reshuffle(np.array([[1.0], [2.0], [3.0]])),
                                  [[1.0], [2.0], [3.0]])
    X = rng.standard_normal((12, 5))
    np.testing.assert_array_equal(reshuffle(inverse_reshuffle(X)), X)
    assert inverse_reshuffle(X).shape == (15, 4)


def test_inverse_reshuffle_rejects_bad_rows():
    with pytest.raises(MalformedInputError):
        inverse_reshuffle(np.zeros((4, 2)))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_reshuffle_roundtrip_property(F, P, seed):
    S = np.random.default_rng(seed).standard_normal((3 * F, P))
    np.testing.assert_array_equal(inverse_reshuffle(reshuffle(S)), S)


def test_reshuffle_roundtrip_thousand_trials():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        F, P = rng.integers(1, 21, size=2)
        S = rng.standard_normal((3 * F, P))
        assert np.array_equal(inverse_reshuffle(reshuffle(S)), S)


def test_rank_bound_from_shape_modes(rng):
    F, P, K = 15, 40, 3
    bases = rng.standard_normal((K, 3, P))
    coef = rng.standard_normal((F, K))
    S = np.einsum("fk,kap->fap", coef, bases).reshape(3 * F, P)
    s = np.linalg.svd(reshuffle(S), compute_uv=False)
    assert s[K] < 1e-8 * s[0]


def test_reorder_columns_cases():
    M = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(reorder_columns(M, np.arange(3)), M)
    np.testing.assert_array_equal(reorder_columns(M, [2, 1, 0]), [[3.0, 2.0, 1.0]])
    perm = OrderingVector(np.array([2, 0, 1]))
    back = reorder_columns(reorder_columns(M, perm), perm.inverse())
    np.testing.assert_array_equal(back, M)
    with pytest.raises(MalformedInputError):
        reorder_columns(M, [0, 0, 1])


def test_reorder_history_matches_chart(rng):
    P = 30
    M = rng.standard_normal((4, P))
    cur, ids = M.copy(), np.arange(P)
    steps = [rng.permutation(P) for _ in range(6)]
    for s in steps:
        cur, ids = reorder_columns(cur, s, ids)
    chart = compose_orderings(steps)
    np.testing.assert_array_equal(ids, chart)
    np.testing.assert_array_equal(cur, M[:, chart])


def test_relative_permutation(rng):
    prev, new = rng.permutation(10), rng.permutation(10)
    r = relative_permutation(prev, new)
    np.testing.assert_array_equal(prev[r], new)


def test_measurement_matrix_validation():
    with pytest.raises(MalformedInputError, match=r"rows must be even \(2F\)"):
        MeasurementMatrix(np.zeros((3, 2)))
    with pytest.raises(MalformedInputError):
        MeasurementMatrix(np.array([[np.nan, 1.0], [0.0, 1.0]]))
    with pytest.raises(MalformedInputError):
        MeasurementMatrix(np.zeros((2, 3)), point_ids=np.array([0, 0, 1]))
    W = MeasurementMatrix(np.arange(8.0).reshape(2, 4))
    assert (W.frames, W.points) == (1, 4)
    W2 = W.reorder([3, 2, 1, 0])
    np.testing.assert_array_equal(W2.point_ids, [3, 2, 1, 0])
    np.testing.assert_array_equal(W2.data[:, 0], W.data[:, 3])
    assert not W.data.flags.writeable


def test_rotation_stack(rng):
    from scipy.spatial.transform import Rotation
    R = Rotation.random(4, random_state=1).as_matrix()[:, :2, :]
    rs = RotationStack(R)
    assert rs.frames == 4
    np.testing.assert_array_equal(RotationStack(rs.as_matrix()).blocks, rs.blocks)
    S = rng.standard_normal((12, 7))
    np.testing.assert_allclose(rs.project(S), rs.block_diagonal() @ S, atol=1e-12)
    with pytest.raises(MalformedInputError):
        RotationStack(2.0 * R)


def test_shape_types():
    with pytest.raises(MalformedInputError):
        ShapeMatrix(np.zeros((4, 2)))
    with pytest.raises(MalformedInputError):
        ReshuffledShape(np.zeros((5, 2)))
    S = ShapeMatrix(np.arange(12.0).reshape(6, 2))
    np.testing.assert_array_equal(S.frame(1), np.arange(6.0, 12.0).reshape(3, 2))
    np.testing.assert_array_equal(reshuffle(S), reshuffle(S.data))


def test_is_permutation():
    assert is_permutation(np.array([1, 0, 2]))
    assert not is_permutation(np.array([1, 1, 2]))
    assert not is_permutation(np.array([0.0, 1.0]))
