"""Low-SNR slopes: largest output-covariance trace under intensity constraints.

At low SNR the capacity grows like half the largest ``tr K_SS``.  With
``E X = alpha`` the maximiser is the comonotone ("maximally correlated")
binary input and the value has a closed form; with ``E X <= alpha`` one
maximises that closed form over ``0 <= x <= alpha``, a concave but
nonsmooth problem.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channel import ChannelError

__all__ = [
    "Gram",
    "Allocation",
    "MaxCorrBinary",
    "gram",
    "v_max_ec",
    "max_corr_binary",
    "f0_subgradient",
    "solve_bc_allocation",
    "ladder_value",
    "ladder_best_beta",
    "ratio_RL",
    "slope_ec",
    "slope_bc",
]

MAX_ITER = 50_000
STALL_TOL = 1e-6
STALL_WINDOW = 300  # iterations without a STALL_TOL gain
_EXHAUSTIVE_ORDERINGS = 4  # enumerate every ordering up to this many inputs


@dataclass(frozen=True)
class Gram:
    G: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, float))
        if G.shape[0] != G.shape[1]:
            raise ChannelError("Gram matrix must be square")
        scale = max(1.0, np.abs(G).max())
        if not np.allclose(G, G.T, atol=1e-12 * scale):
            raise ChannelError("Gram matrix must be symmetric")
        if np.any(G < -1e-12 * scale):
            raise ChannelError("Gram matrix of a nonnegative channel has nonnegative entries")
        if np.linalg.eigvalsh(0.5 * (G + G.T)).min() < -1e-10 * scale:
            raise ChannelError("Gram matrix is not positive semidefinite")
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.G.shape[0]


def gram(H) -> Gram:
    H = getattr(H, "H", H)
    H = np.atleast_2d(np.asarray(H, float))
    return Gram(H.T @ H)


def _G(G) -> np.ndarray:
    return G.G if isinstance(G, Gram) else Gram(G).G


def _trace_value(G: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(G * (np.minimum.outer(x, x) - np.outer(x, x))))


def v_max_ec(G, alpha) -> float:
    """``sum_ij g_ij (min(a_i, a_j) - a_i a_j)``: the largest ``tr K_SS`` with ``E X = alpha``."""
    G = _G(G)
    a = np.asarray(alpha, float)
    if a.shape != (G.shape[0],):
        raise ChannelError("alpha length does not match the Gram matrix")
    if np.any(a < 0) or np.any(a > 1):
        raise ChannelError("alpha entries must lie in [0, 1]")
    return _trace_value(G, a)


def slope_ec(G, alpha) -> float:
    return 0.5 * v_max_ec(G, alpha)


@dataclass(frozen=True)
class MaxCorrBinary:
    """Comonotone binary law on ``0, e_1, e_1 + e_2, ..., 1``."""

    points: np.ndarray
    probs: np.ndarray

    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def covariance(self) -> np.ndarray:
        m = self.mean()
        C = self.points - m
        return (C * self.probs[:, None]).T @ C

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return self.points[idx]


def max_corr_binary(alpha) -> MaxCorrBinary:
    a = np.asarray(alpha, float)
    if np.any(np.diff(a) > 0):
        raise ChannelError("alpha must be sorted in descending order")
    if np.any(a < 0) or np.any(a > 1):
        raise ChannelError("alpha entries must lie in [0, 1]")
    n = a.size
    points = np.tril(np.ones((n + 1, n)), -1)
    probs = -np.diff(np.r_[1.0, a, 0.0])
    return MaxCorrBinary(points, np.maximum(probs, 0.0))


def f0_subgradient(G, x):
    """Value and a subgradient of ``f0(x) = -sum_ij g_ij (min(x_i, x_j) - x_i x_j)``.

    When ``x_i = x_j`` the derivative of ``min`` is shared equally.
    """
    G = _G(G)
    x = np.asarray(x, float)
    less = (x[:, None] < x[None, :]).astype(float)
    tie = (x[:, None] == x[None, :]).astype(float)
    W = 2.0 * less + tie
    np.fill_diagonal(W, 1.0)
    dmin = np.sum(G * W, axis=1)
    return -_trace_value(G, x), 2.0 * G @ x - dmin


@dataclass(frozen=True)
class Allocation:
    x: np.ndarray
    value: float
    meta: dict = field(default_factory=dict)


def _ordered_qp(G, lo, hi, order, x0):
    """Maximise the trace over the box with ``x[order[0]] >= x[order[1]] >= ...``.

    On that cone ``min(x_i, x_j)`` is linear, so the problem is a concave QP.
    """
    n = G.shape[0]
    rank = np.empty(n, int)
    rank[list(order)] = np.arange(n)
    c = np.diag(G).copy()
    for k in range(n):
        c[k] += 2.0 * G[k, rank < rank[k]].sum()
    D = np.zeros((max(n - 1, 0), n))
    for k, (i, j) in enumerate(zip(order[:-1], order[1:])):
        D[k, i], D[k, j] = 1.0, -1.0
    cons = [{"type": "ineq", "fun": lambda z: D @ z, "jac": lambda z: D}] if n > 1 else []
    x0 = np.clip(x0, lo, hi)
    scale = max(np.abs(G).max(), 1e-300)
    with warnings.catch_warnings():
        # SLSQP clips its own bound overshoots, which is what we want anyway
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = minimize(lambda z: (z @ G @ z - c @ z) / scale, x0,
                       jac=lambda z: (2 * G @ z - c) / scale,
                       bounds=list(zip(lo, hi)), constraints=cons, method="SLSQP",
                       options={"ftol": 1e-13, "maxiter": 200})
    return np.clip(res.x, lo, hi)


def _projected_subgradient(G, lo, hi, x0, max_iter=MAX_ITER):
    x = np.clip(x0, lo, hi)
    best_x, best_f = x.copy(), f0_subgradient(G, x)[0]
    diam = max(np.linalg.norm(hi - lo), 1e-12)
    last_gain = 0
    it = 0
    for it in range(1, max_iter + 1):
        f, g = f0_subgradient(G, x)
        if f < best_f - STALL_TOL * 1e-3:
            if f < best_f - STALL_TOL:
                last_gain = it
            best_f, best_x = f, x.copy()
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        # Polyak step towards a target a little below the best value so far
        target = best_f - diam * gn / (10.0 * math.sqrt(it))
        x = np.clip(x - (f - target) / gn ** 2 * g, lo, hi)
        if it - last_gain > STALL_WINDOW:
            break
    return best_x, best_f, it


def solve_bc_allocation(G, alpha, max_iter: int = MAX_ITER) -> Allocation:
    """Largest ``tr K_SS`` over inputs with ``E X <= alpha``.

    The search runs on the narrowed box ``[min(a_min, 1/2), min(alpha, 1/2)]``
    where any optimum lies; projected subgradient steps pick the ordering
    region of the optimum, and a concave QP on that region (plus the
    ladder candidate) finishes the job exactly.
    """
    G = _G(G)
    a = np.asarray(alpha, float)
    n = a.size
    if a.shape != (G.shape[0],):
        raise ChannelError("alpha length does not match the Gram matrix")
    if a.min() >= 0.5:
        x = np.full(n, 0.5)
        return Allocation(x, _trace_value(G, x), {"method": "closed_form", "status": "converged"})

    lo = np.full(n, min(a.min(), 0.5))
    hi = np.minimum(a, 0.5)
    beta, _ = ladder_best_beta(G, a)
    x_lad = np.minimum(beta, a)
    x_sg, f_sg, its = _projected_subgradient(G, lo, hi, x_lad, max_iter)

    candidates = [x_lad, x_sg]
    if n <= _EXHAUSTIVE_ORDERINGS:
        orders = itertools.permutations(range(n))
    else:
        orders = {tuple(np.argsort(-x_sg, kind="stable")), tuple(np.argsort(-a, kind="stable"))}
    for order in orders:
        candidates.append(_ordered_qp(G, lo, hi, np.array(order), x_sg))
    vals = [_trace_value(G, x) for x in candidates]
    k = int(np.argmax(vals))
    status = "converged" if its < max_iter else "max_iter"
    return Allocation(candidates[k], vals[k],
                      {"method": "subgradient+qp", "iterations": its, "status": status,
                       "subgradient_value": -f_sg})


def slope_bc(G, alpha) -> float:
    return 0.5 * solve_bc_allocation(G, alpha).value


def ladder_value(G, alpha, beta: float) -> float:
    """Trace achieved by the ladder allocation ``x = min(beta, alpha)``."""
    G = _G(G)
    return _trace_value(G, np.minimum(beta, np.asarray(alpha, float)))


def ladder_best_beta(G, alpha):
    """Best ladder level ``beta`` in ``[min(a_min, 1/2), min(a_max, 1/2)]`` and its value.

    Between consecutive sorted ratios the value is
    ``w beta (1 - beta) + 2 (1 - beta) C + K``; each piece contributes its
    endpoints and its stationary point ``(w - 2C) / (2w)``.
    """
    G = _G(G)
    a_in = np.asarray(alpha, float)
    order = np.argsort(-a_in, kind="stable")
    a = a_in[order]
    Gs = G[np.ix_(order, order)]
    lo, hi = min(a[-1], 0.5), min(a[0], 0.5)
    cands = {lo, hi}
    levels = np.unique(a)  # merges repeated ratios
    for b in levels:
        if lo <= b <= hi:
            cands.add(float(b))
    for k in range(1, a.size + 1):
        left = a[k] if k < a.size else lo
        right = a[k - 1]
        if right - left <= 0:
            continue
        w = Gs[:k, :k].sum()
        C = Gs[:k, k:] @ a[k:] if k < a.size else 0.0
        C = float(np.sum(C))
        if w > 0:
            b = (w - 2 * C) / (2 * w)
            if max(left, lo) <= b <= min(right, hi):
                cands.add(float(b))
    cands = sorted(cands)
    vals = [ladder_value(G, a_in, b) for b in cands]
    k = int(np.argmax(vals))
    return float(cands[k]), float(vals[k])


def ratio_RL(G, alpha) -> float:
    """Ladder value over the optimal BC value; raises when the latter is zero."""
    den = solve_bc_allocation(G, alpha).value
    if den <= 0:
        raise ValueError("optimal trace is zero; ratio undefined")
    return ladder_best_beta(G, alpha)[1] / den
