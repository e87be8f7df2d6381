"""Zonotope geometry of the admissible set ``{H_tilde x : x in [0,1]^n_t}``.

The zonotope is tiled by half-open parallelepipeds, one per set of ``r``
linearly independent generators.  Translates come from a regular
(coherent) tiling: lift generator ``h_j`` to ``(h_j, w_j)`` with generic
heights ``w_j`` and project the lower facets of the lifted zonotope.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .channel import ChannelError, ReducedChannel

__all__ = [
    "ParallelepipedCell",
    "ZonotopeDecomposition",
    "FiberInterval",
    "decompose",
    "locate",
    "sample_uniform",
    "in_zonotope",
    "f_min",
    "f_max",
    "fiber_interval",
    "fiber_point",
    "fmin_values",
]

MAX_GENERATORS = 16
ZERO_TAIL = 1e-12
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ParallelepipedCell:
    basis: tuple
    B: np.ndarray
    det_abs: float
    translate: np.ndarray

    @property
    def B_inv(self) -> np.ndarray:
        return np.linalg.inv(self.B)

    def local_coords(self, s) -> np.ndarray:
        return np.linalg.solve(self.B, np.asarray(s, dtype=float) - self.translate)


@dataclass(frozen=True)
class ZonotopeDecomposition:
    cells: tuple
    volume: float
    generators: np.ndarray

    @property
    def dim(self) -> int:
        return self.generators.shape[0]

    def bounding_box(self):
        g = self.generators
        return np.minimum(g, 0).sum(axis=1), np.maximum(g, 0).sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "volume": self.volume,
            "generators": self.generators.tolist(),
            "cells": [
                {
                    "basis": list(c.basis),
                    "det_abs": c.det_abs,
                    "translate": c.translate.tolist(),
                }
                for c in self.cells
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _lift_heights(n: int) -> np.ndarray:
    # strictly increasing, irrational perturbations keep the lifting generic
    j = np.arange(n, dtype=float)
    return (j + 1.0) ** 2 + 1e-3 * ((j * _GOLDEN) % 1.0)


def decompose(rc, det_tol: float = 1e-12) -> ZonotopeDecomposition:
    """Tile the zonotope of ``rc.H_tilde`` (or a raw generator matrix).

    Returns one half-open parallelepiped per independent ``r``-subset of
    columns; their volumes add up to the zonotope volume.
    """
    G = rc.H_tilde if isinstance(rc, ReducedChannel) else np.atleast_2d(np.asarray(rc, float))
    r, n = G.shape
    if r < 1:
        raise ChannelError("zonotope needs dimension r >= 1")
    if n > MAX_GENERATORS:
        raise ChannelError(f"too many generators ({n} > {MAX_GENERATORS})")

    w = _lift_heights(n)
    norms = np.linalg.norm(G, axis=0)
    cells = []
    for U in itertools.combinations(range(n), r):
        B = G[:, U]
        scale = np.prod(norms[list(U)])
        det = np.linalg.det(B)
        if scale == 0 or abs(det) <= det_tol * scale:
            continue
        # lifted facet normal (y, 1): h_i . y + w_i = 0 on the basis
        y = np.linalg.solve(B.T, -w[list(U)])
        rest = [j for j in range(n) if j not in U]
        d = G[:, rest].T @ y + w[rest]
        if np.any(np.abs(d) < 1e-12 * (1 + np.abs(w[rest]))):
            raise ChannelError("non-generic lifting heights; cannot assign translates")
        below = [j for j, dj in zip(rest, d) if dj < 0]
        translate = G[:, below].sum(axis=1) if below else np.zeros(r)
        B = B.copy()
        B.setflags(write=False)
        translate.setflags(write=False)
        cells.append(ParallelepipedCell(tuple(U), B, float(abs(det)), translate))

    if not cells:
        raise ChannelError("generators do not span the space; zonotope is degenerate")
    G = G.copy()
    G.setflags(write=False)
    return ZonotopeDecomposition(tuple(cells), float(sum(c.det_abs for c in cells)), G)


def locate(zd: ZonotopeDecomposition, s, tol: float = 1e-12):
    """Find the cell that owns ``s``.

    Returns ``(index, t)`` with ``s = translate + B t`` or ``None`` when
    ``s`` is outside.  A cell owns ``t in [0, 1)^r``; points on the outer
    upper boundary fall back to closed membership.  Among several owners
    the smallest ``sum(t)`` wins, then the lowest index.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    best = None
    closed = None
    for k, cell in enumerate(zd.cells):
        t = cell.local_coords(s)
        if np.any(t < -tol) or np.any(t > 1 + tol):
            continue
        t = np.clip(t, 0.0, 1.0)
        if np.all(t < 1 - tol):
            if best is None or t.sum() < best[1].sum() - tol:
                best = (k, t)
        elif closed is None:
            closed = (k, t)
    return best if best is not None else closed


def sample_uniform(zd: ZonotopeDecomposition, rng: np.random.Generator, size: Optional[int] = None):
    """Draw uniform points from the zonotope (cell-then-cube sampling)."""
    n = 1 if size is None else int(size)
    p = np.array([c.det_abs for c in zd.cells]) / zd.volume
    idx = rng.choice(len(zd.cells), size=n, p=p)
    t = rng.random((n, zd.dim))
    out = np.empty((n, zd.dim))
    for k, cell in enumerate(zd.cells):
        m = idx == k
        if m.any():
            out[m] = cell.translate + t[m] @ cell.B.T
    return out[0] if size is None else out


def in_zonotope(generators, s, tol: float = 1e-9) -> bool:
    """Membership oracle: LP feasibility of ``G x = s`` with ``x in [0, 1]^n``."""
    G = np.atleast_2d(np.asarray(generators, float))
    s = np.atleast_1d(np.asarray(s, float))
    n = G.shape[1]
    # minimise the equality residual through slack variables
    r = G.shape[0]
    c = np.r_[np.zeros(n), np.ones(2 * r)]
    A = np.hstack([G, np.eye(r), -np.eye(r)])
    res = linprog(c, A_eq=A, b_eq=s, bounds=[(0, 1)] * n + [(0, None)] * (2 * r), method="highs")
    return bool(res.status == 0 and res.fun <= tol * (1 + np.abs(s).sum()))


# ---------------------------------------------------------------------------
# fibers for r = n_t - 1
# ---------------------------------------------------------------------------


def _fiber_pieces(rc: ReducedChannel):
    """Affine pieces of the fiber bounds.

    For active rows ``i`` (``v_tail[i] != 0``) the fiber coordinate
    satisfies ``lo_i(s) <= lam <= hi_i(s)`` with
    ``lo_i(s) = a_lo[i] - (M s)_i / v_i`` and
    ``hi_i(s) = a_hi[i] - (M s)_i / v_i``, where ``M = V1 diag(1/sigma)``.
    """
    rc.require_corank_one()
    v = rc.v_tail
    M = rc.V1 / rc.sigma[None, :]
    act = np.abs(v) > ZERO_TAIL
    va = v[act]
    sg = np.sign(va)
    a_lo = (1 - sg) / (2 * va)
    a_hi = (1 + sg) / (2 * va)
    slope = M[act] / va[:, None]
    return a_lo, a_hi, slope, M, act


def fmin_values(rc: ReducedChannel, S) -> np.ndarray:
    """Vectorised ``f_min`` over rows of ``S`` (no membership check)."""
    a_lo, _, slope, _, _ = _fiber_pieces(rc)
    S = np.atleast_2d(np.asarray(S, float))
    return np.max(a_lo[None, :] - S @ slope.T, axis=1)


def fmin_kinks_1d(rc: ReducedChannel, reflect: bool = False) -> np.ndarray:
    """Breakpoints of ``f_min(s)`` (or ``f_min(H1 - s)``) for ``r = 1``."""
    a_lo, _, slope, _, _ = _fiber_pieces(rc)
    if slope.shape[1] != 1:
        raise ValueError("kinks are only tabulated in one dimension")
    m = slope[:, 0]
    pts = []
    for i, j in itertools.combinations(range(len(m)), 2):
        if abs(m[i] - m[j]) > 1e-15:
            pts.append((a_lo[i] - a_lo[j]) / (m[i] - m[j]))
    pts = np.asarray(pts, dtype=float)
    if reflect:
        pts = rc.H_tilde.sum(axis=1)[0] - pts
    return pts


def _bounds(rc: ReducedChannel, S):
    a_lo, a_hi, slope, M, act = _fiber_pieces(rc)
    S = np.atleast_2d(np.asarray(S, float))
    proj = S @ slope.T
    lo = np.max(a_lo[None, :] - proj, axis=1)
    hi = np.min(a_hi[None, :] - proj, axis=1)
    fixed = S @ M[~act].T
    ok_fixed = np.all((fixed >= -1e-9) & (fixed <= 1 + 1e-9), axis=1)
    return lo, hi, ok_fixed


def _check_inside(rc, s, tol=1e-9):
    lo, hi, ok = _bounds(rc, s)
    if not (ok[0] and lo[0] <= hi[0] + tol):
        raise ValueError("point is outside admissible region")
    return lo[0], hi[0]


def f_min(rc: ReducedChannel, s) -> float:
    """Smallest fiber coordinate over ``{x in [0,1]^n_t : H_tilde x = s}``."""
    return float(_check_inside(rc, s)[0])


def f_max(rc: ReducedChannel, s) -> float:
    """Largest fiber coordinate, via ``1^T v_tail - f_min(H_tilde 1 - s)``."""
    _check_inside(rc, s)
    s = np.atleast_1d(np.asarray(s, float))
    return float(rc.v_tail.sum() - fmin_values(rc, rc.H_tilde.sum(axis=1) - s)[0])


@dataclass(frozen=True)
class FiberInterval:
    lo: float
    hi: float
    base_point: np.ndarray


def fiber_interval(rc: ReducedChannel, s) -> FiberInterval:
    s = np.atleast_1d(np.asarray(s, float))
    lo, hi = _check_inside(rc, s)
    base = (rc.V1 / rc.sigma[None, :]) @ s
    return FiberInterval(float(lo), float(max(hi, lo)), base)


def fiber_point(rc: ReducedChannel, s, lam: float, tol: float = 1e-9) -> np.ndarray:
    """Input vector ``lam * v_tail + V1 diag(sigma)^-1 s`` on the fiber over ``s``."""
    fi = fiber_interval(rc, s)
    if lam < fi.lo - tol or lam > fi.hi + tol:
        raise ValueError(f"lambda={lam} outside fiber interval [{fi.lo}, {fi.hi}]")
    return lam * rc.v_tail + fi.base_point
