import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import inside_halfspaces, random_corank_one
from oicap.channel import ChannelError, reduce
from oicap.zonotope import (
    _bounds,
    decompose,
    f_max,
    f_min,
    fiber_interval,
    fiber_point,
    fmin_values,
    in_zonotope,
    locate,
    sample_uniform,
)


def lp_fiber(rc, s, sense):
    """Extreme fiber coordinate by linear programming over x."""
    v = rc.v_tail
    res = linprog(sense * v, A_eq=rc.H_tilde, b_eq=s, bounds=[(0, 1)] * rc.n_t, method="highs")
    assert res.status == 0
    return v @ res.x


def test_one_dimensional_tiling():
    zd = decompose(np.array([[0.65, 0.35]]))
    assert len(zd.cells) == 2
    assert zd.volume == pytest.approx(1.0)
    k, t = locate(zd, [0.3])
    assert zd.cells[k].basis == (0,)
    assert t[0] == pytest.approx(0.3 / 0.65)
    assert locate(zd, [1.2]) is None
    assert locate(zd, [-0.01]) is None


def test_cube_and_hexagon():
    assert decompose(np.eye(2)).volume == pytest.approx(1.0)
    zd = decompose(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    assert len(zd.cells) == 3
    assert zd.volume == pytest.approx(3.0)


def test_translate_is_owned_with_zero_coordinates():
    zd = decompose(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    for k, c in enumerate(zd.cells):
        got = locate(zd, c.translate + 1e-9 * c.B.sum(axis=1))
        assert got is not None and got[0] == k


def test_degenerate_generators_rejected():
    with pytest.raises(ChannelError):
        decompose(np.zeros((2, 3)))
    with pytest.raises(ChannelError):
        decompose(np.ones((1, 17)))


def test_uniform_samples_one_dimensional(rng):
    zd = decompose(np.array([[0.65, 0.35]]))
    s = sample_uniform(zd, rng, 10 ** 6)[:, 0]
    se = s.std() / np.sqrt(s.size)
    assert abs(s.mean() - 0.5) <= 3 * se


def test_uniform_samples_cube(rng):
    zd = decompose(np.eye(2))
    s = sample_uniform(zd, rng, 200_000)
    np.testing.assert_allclose(np.cov(s.T), np.eye(2) / 12, atol=2e-3)
    assert all(locate(zd, p) is not None for p in s[:200])


@pytest.mark.parametrize("seed", range(10))
def test_partition_against_facet_oracle(seed):
    rng = np.random.default_rng(seed)
    n_t = rng.integers(2, 6)
    _, rc = random_corank_one(rng, n_t)
    zd = decompose(rc)
    lo, hi = zd.bounding_box()
    P = lo + (hi - lo) * rng.random((400, rc.r))
    inside = inside_halfspaces(rc.H_tilde, P)
    for p, ins in zip(P, inside):
        owners = []
        for k, c in enumerate(zd.cells):
            t = c.local_coords(p)
            if np.all(t >= 0) and np.all(t < 1):
                owners.append(k)
        assert len(owners) == (1 if ins else 0)


def test_lp_membership_matches_facets(rng):
    _, rc = random_corank_one(rng, 4)
    zd = decompose(rc)
    lo, hi = zd.bounding_box()
    P = lo + (hi - lo) * rng.random((60, rc.r))
    fac = inside_halfspaces(rc.H_tilde, P)
    lp = np.array([in_zonotope(rc.H_tilde, p) for p in P])
    assert np.array_equal(fac, lp)


def test_fiber_endpoints_at_corners():
    rc = reduce([[0.65, 0.35]])
    assert f_min(rc, [0.0]) == pytest.approx(0.0, abs=1e-14)
    assert f_max(rc, [0.0]) == pytest.approx(0.0, abs=1e-14)
    top = rc.H_tilde.sum(axis=1)
    assert f_min(rc, top) == pytest.approx(rc.v_tail.sum())
    assert f_max(rc, top) == pytest.approx(rc.v_tail.sum())
    np.testing.assert_allclose(fiber_point(rc, [0.0], 0.0), 0.0, atol=1e-14)
    np.testing.assert_allclose(fiber_point(rc, top, rc.v_tail.sum()), 1.0, atol=1e-12)


def test_midpoint_fiber_dense_grid():
    rc = reduce([[0.65, 0.35]])
    s = rc.H_tilde @ np.array([0.5, 0.5])
    fi = fiber_interval(rc, s)
    for lam in np.linspace(fi.lo, fi.hi, 101):
        x = fiber_point(rc, s, lam)
        assert np.all(x >= -1e-12) and np.all(x <= 1 + 1e-12)
        np.testing.assert_allclose(rc.H_tilde @ x, s, atol=1e-12)
    # just beyond the ends the fiber leaves the cube
    for lam in (fi.lo - 1e-3, fi.hi + 1e-3):
        x = lam * rc.v_tail + fi.base_point
        assert np.any(x < 0) or np.any(x > 1)


def test_lowest_fiber_point_is_active():
    rng = np.random.default_rng(3)
    _, rc = random_corank_one(rng, 3)
    for x0 in rng.random((20, 3)):
        s = rc.H_tilde @ x0
        x = fiber_point(rc, s, f_min(rc, s))
        assert np.min(np.minimum(np.abs(x), np.abs(1 - x))) < 1e-10


def test_outside_point_rejected():
    rc = reduce([[0.65, 0.35]])
    with pytest.raises(ValueError, match="outside"):
        f_min(rc, [1.5])


@pytest.mark.parametrize("seed", range(50))
def test_fiber_suite_random_channels(seed):
    rng = np.random.default_rng(1000 + seed)
    n_t = int(rng.integers(2, 6))
    _, rc = random_corank_one(rng, n_t)
    zd = decompose(rc)
    S = sample_uniform(zd, rng, 40)
    top = rc.H_tilde.sum(axis=1)
    v1 = rc.v_tail.sum()
    for s in S:
        lo, hi, ok = _bounds(rc, s)
        assert ok[0]
        # symmetry: direct upper bound plus reflected lower bound
        assert abs(hi[0] + fmin_values(rc, top - s)[0] - v1) <= 1e-10
        assert f_max(rc, s) == pytest.approx(hi[0], abs=1e-10)
        lam = rng.uniform(lo[0], hi[0])
        x = fiber_point(rc, s, lam)
        assert np.all(x >= -1e-10) and np.all(x <= 1 + 1e-10)
        np.testing.assert_allclose(rc.H_tilde @ x, s, atol=1e-10)
    for s in S[:5]:
        assert f_min(rc, s) == pytest.approx(lp_fiber(rc, s, 1), abs=1e-7)
        assert f_max(rc, s) == pytest.approx(lp_fiber(rc, s, -1), abs=1e-7)
    # convexity of f_min along random chords
    for s1, s2 in zip(S[::2], S[1::2]):
        th = rng.random()
        m = th * s1 + (1 - th) * s2
        assert f_min(rc, m) <= th * f_min(rc, s1) + (1 - th) * f_min(rc, s2) + 1e-12


def test_decomposition_serialises():
    zd = decompose(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    d = zd.to_dict()
    assert d["volume"] == pytest.approx(3.0)
    assert len(d["cells"]) == 3
    assert '"dim": 2' in zd.to_json()
