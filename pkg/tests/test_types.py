import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltnid.errors import DataError
from ltnid.types import (DataBatch, DataSample, LtnModel, SaturationPattern, build_batch,
                         dale_constraint_matrix, h_layout, pack_h, unpack_h)


def test_pack_two_node_by_hand():
    a, b, c, d = 0.1, 0.2, 0.3, 0.4
    W = np.array([[0.0, a], [b, 0.0]])
    B = np.array([[c], [d]])
    assert pack_h(W, B).tolist() == [a, c, b, d]


def test_pack_zero_model():
    h = pack_h(np.zeros((3, 3)), np.zeros((3, 2)))
    assert h.shape == (3 * (3 + 2 - 1),)
    assert not h.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.lists(st.booleans(), min_size=4, max_size=4),
       st.integers(0, 2**31 - 1))
def test_pack_unpack_round_trip(n, m, mask, seed):
    rng = np.random.default_rng(seed)
    mask = np.array(mask[:n])
    W = rng.normal(size=(n, n))
    W[np.diag_indices(n)] *= mask
    B = rng.normal(size=(n, m))
    h = pack_h(W, B, mask)
    assert h.size == h_layout(n, m, mask).h_dim == n * (n + m - 1) + mask.sum()
    W2, B2 = unpack_h(h, n, m, mask)
    assert np.array_equal(W2, W) and np.array_equal(B2, B)


def test_self_loop_keeps_diagonal_in_place():
    W = np.array([[0.5, 0.1], [0.2, 0.0]])
    B = np.array([[0.3], [0.4]])
    assert pack_h(W, B, [True, False]).tolist() == [0.5, 0.1, 0.3, 0.2, 0.4]


def test_pack_rejects_bad_shapes():
    with pytest.raises(DataError):
        pack_h(np.zeros((2, 3)), np.zeros((2, 1)))
    with pytest.raises(DataError):
        unpack_h(np.zeros(5), 2, 1)


def test_single_sample_P_layout():
    batch = build_batch([DataSample(np.array([1.0, 2.0]), np.array([3.0]), np.array([0.0, 0.0]))])
    assert batch.P.tolist() == [[2.0, 3.0, 0.0, 0.0], [0.0, 0.0, 1.0, 3.0]]


def test_P_times_h_matches_drive(rng):
    n, m, T = 3, 2, 5
    W = rng.normal(size=(n, n))
    np.fill_diagonal(W, 0.0)
    B = rng.normal(size=(n, m))
    x, u = rng.uniform(0, 4, (T, n)), rng.uniform(0, 6, (T, m))
    batch = DataBatch(x, u, x)
    drive = (x @ W.T + u @ B.T).reshape(-1)
    h = pack_h(W, B)
    assert batch.P.shape == (n * T, h.size)
    assert np.allclose(batch.P @ h, drive, atol=1e-13)
    assert np.allclose(batch.apply_h(h), drive, atol=1e-13)


def test_builder_is_deterministic(rng):
    samples = [(rng.uniform(size=2), rng.uniform(size=1), rng.uniform(size=2)) for _ in range(4)]
    a, b = build_batch(samples), build_batch(samples)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.X, b.X) and np.array_equal(a.X_plus, b.X_plus)


def test_build_batch_errors():
    with pytest.raises(DataError):
        build_batch([])
    with pytest.raises(DataError):
        build_batch([([1.0, 2.0], [0.0], [1.0, 2.0]), ([1.0], [0.0], [1.0])])
    with pytest.raises(DataError):
        DataBatch(np.ones((2, 2)), np.ones((2, 1)), np.full((2, 2), np.nan))


def test_model_invariants():
    W = np.array([[0.0, 0.1], [-0.1, 0.0]])
    B = np.ones((2, 1))
    LtnModel(0.9, W, B, 2.0)
    with pytest.raises(DataError):
        LtnModel(1.0, W, B, 2.0)
    with pytest.raises(DataError):
        LtnModel(0.5, W, B, 0.0)
    with pytest.raises(DataError):
        LtnModel(0.5, np.eye(2), B, 1.0)
    LtnModel(0.5, np.eye(2), B, 1.0, self_loop_mask=[True, True])
    with pytest.raises(DataError, match="column 0"):
        LtnModel(0.5, W, B, 1.0, dale_signs=[1, 1])


def test_dale_rows_encode_column_signs():
    S = dale_constraint_matrix(2, 1, [1, -1])
    W = np.array([[0.0, -0.2], [0.3, 0.0]])
    h = pack_h(W, np.zeros((2, 1)))
    assert np.all(S @ h <= 0)
    h_bad = pack_h(-W, np.zeros((2, 1)))
    assert np.any(S @ h_bad > 0)


def test_pattern_sets_partition_indices():
    p = SaturationPattern(np.array([1, 0, -1, 0, 1]))
    assert p.set_S.tolist() == [0, 4]
    assert p.set_Z.tolist() == [2]
    assert p.set_M.tolist() == [1, 3]
    assert p.d == 3
    assert p == SaturationPattern(np.array([1, 0, -1, 0, 1]))
