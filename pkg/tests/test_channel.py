import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oicap.channel import (
    ChannelError,
    ChannelMatrix,
    IntensityProfile,
    NoiseLevel,
    energy_ratios,
    epsilon_rank,
    rank_one_factorization,
    reduce,
    validate,
)


def test_reference_channel_a_is_rank_one_with_positive_v1():
    rc = reduce([[0.65, 0.35]])
    assert rc.r == 1
    assert rc.v1.sum() > 0
    assert np.all(rc.v1 > 0)
    assert rc.v_tail is not None and rc.v_tail.sum() >= 0
    # sigma_1 * 1^T v_1 equals the row sum for a single receiver
    np.testing.assert_allclose(rc.H_tilde @ np.ones(2), [1.0], rtol=1e-12)


def test_identity_reduces_to_rank_two():
    rc = reduce(np.eye(2))
    assert rc.r == 2
    assert rc.v_tail is None
    np.testing.assert_allclose(rc.sigma, [1, 1])


def test_rank_deficient_square_matrix():
    H = np.array([[1.0, 2.0], [2.0, 4.0]])
    rc = reduce(H)
    assert rc.r == 1
    w, b = rank_one_factorization(H)
    np.testing.assert_allclose(np.outer(w, b), H, atol=1e-12)
    np.testing.assert_allclose(w, [1, 2], atol=1e-12)


@pytest.mark.parametrize("bad", [
    [[np.nan, 1.0]], [[-0.1, 1.0]], [[0.0, 0.0]], [[1.0]],
])
def test_invalid_channels_rejected(bad):
    with pytest.raises(ChannelError):
        ChannelMatrix(bad)


@pytest.mark.parametrize("alpha", [[1.2, 0.5], [-0.1, 0.3], [np.inf, 0.1]])
def test_invalid_alpha_rejected(alpha):
    with pytest.raises(ChannelError):
        IntensityProfile(alpha)


def test_alpha_length_mismatch():
    with pytest.raises(ChannelError, match="columns"):
        validate([[1.0, 2.0]], [0.5, 0.5, 0.5])


def test_order_perm_is_stable_descending():
    p = IntensityProfile([0.2, 0.9, 0.2, 0.5])
    assert list(p.order_perm) == [1, 3, 0, 2]
    assert list(p.pinned) == []
    assert list(IntensityProfile([0.0, 0.4, 1.0]).pinned) == [0, 2]


def test_noise_level_must_be_positive():
    NoiseLevel(1e-3)
    with pytest.raises(ChannelError):
        NoiseLevel(0.0)


def test_epsilon_rank_examples():
    assert epsilon_rank(np.diag([3.0, 1.0]), 0.9) == 1  # 9/10 of the energy exactly
    assert epsilon_rank(np.diag([3.0, 1.0]), 0.95) == 2
    assert epsilon_rank([[0.65, 0.35]], 0.99) == 1


def test_energy_ratios_end_at_one():
    r = energy_ratios([3.0, 2.0, 1.0])
    np.testing.assert_allclose(r, [9 / 14, 13 / 14, 1.0])


def test_reduce_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        reduce(np.eye(2), rank_tol=0.0)


def test_outputs_are_read_only():
    rc = reduce(np.eye(3))
    with pytest.raises(ValueError):
        rc.sigma[0] = 2.0


nonneg = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 5)),
                elements=st.floats(0.01, 10.0))


@settings(max_examples=60, deadline=None)
@given(nonneg)
def test_reduction_reconstructs_channel(H):
    rc = reduce(H)
    # H^T H = H_tilde^T H_tilde: the reduction keeps all output information
    np.testing.assert_allclose(rc.H_tilde.T @ rc.H_tilde, H.T @ H, atol=1e-9 * (1 + (H ** 2).sum()))
    assert rc.v1.sum() > 0
    # Perron: a positive matrix has a positive leading right-singular vector
    assert np.all(rc.v1 > 0)
    if rc.v_tail is not None:
        np.testing.assert_allclose(rc.H_tilde @ rc.v_tail, 0, atol=1e-9 * rc.sigma[0])
        assert rc.v_tail.sum() >= 0


def test_ones_matrix_reduction():
    rc = reduce(np.ones((2, 2)))
    assert rc.r == 1
    np.testing.assert_allclose(rc.sigma, [2.0])
    np.testing.assert_allclose(rc.v1, [2 ** -0.5, 2 ** -0.5])


def test_reference_channel_a_profile_order():
    _, prof = validate([[0.65, 0.35]], [0.9, 0.2])
    assert list(prof.order_perm) == [0, 1]
    _, prof = validate(np.eye(2), [0.0, 0.0])
    assert list(prof.pinned) == [0, 1]


def test_rank_one_factorization_rejects_full_rank():
    with pytest.raises(ChannelError):
        rank_one_factorization(np.eye(2))
    w, b = rank_one_factorization([[0.65, 0.35]])
    np.testing.assert_allclose(w, [1.0])
    np.testing.assert_allclose(b, [0.65, 0.35])


def test_singular_vectors_reconstruct_channel(rng):
    for _ in range(20):
        H = rng.random((rng.integers(1, 5), rng.integers(2, 6)))
        rc = reduce(H)
        full = np.zeros((H.shape[0], H.shape[1]))
        full[: rc.r] = rc.H_tilde
        assert np.linalg.norm(rc.U @ full - H) <= 1e-10 * np.linalg.norm(H)
        np.testing.assert_allclose(rc.H_tilde @ rc.H_tilde.T, np.diag(rc.sigma ** 2), atol=1e-10)
        ranks = [epsilon_rank(H, e) for e in (0.5, 0.9, 0.99, 1.0)]
        assert ranks == sorted(ranks) and ranks[-1] == rc.r
