"""Rank-one channels as scalar channels with stop-loss constraints.

With ``H = sigma_1 u_1 v_1^T`` and ``v_1 >= 0`` the receiver only sees
``S = v_bar^T X`` with ``v_bar = v_1 / 1^T v_1``, a scalar in ``[0, 1]``.
Which laws of ``S`` are reachable from inputs with mean ``alpha`` is
captured by a mean condition plus caps on ``E (S - c_k)_+``, where the
thresholds ``c_k`` are partial sums of ``v_bar`` taken in descending-alpha
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelError, ReducedChannel, _as_profile
from .maxent.core import (
    AffineCost,
    DualPoint,
    Interval,
    MaxEntSolution,
    MomentSpec,
    QuadratureSettings,
    StopLossCost,
    solve_gamma_star,
)

__all__ = [
    "SISOConstraintSet",
    "siso_constraints",
    "ec_constraints",
    "bc_constraints",
    "stop_loss",
    "siso_moment_spec",
    "gamma_siso",
    "gamma_rank_one",
]

_DUP_TOL = 1e-12


@dataclass(frozen=True)
class SISOConstraintSet:
    kind: str
    mean: Optional[float]
    thresholds: np.ndarray
    caps: np.ndarray
    gain: float

    def __post_init__(self):
        if self.kind not in ("EC", "BC"):
            raise ValueError("kind must be 'EC' or 'BC'")
        if self.kind == "EC" and self.mean is None:
            raise ValueError("EC constraint set needs a mean")

    @property
    def stop_loss(self):
        return list(zip(self.thresholds.tolist(), self.caps.tolist()))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": self.mean, "stop_loss": self.stop_loss,
                "gain": self.gain}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def siso_constraints(v1, alpha, kind: str = "EC", sigma1: float = 1.0) -> SISOConstraintSet:
    """Constraint set from a nonnegative direction ``v1`` and ratios ``alpha``.

    Works for any number of inputs, including one.  Thresholds that
    coincide (zero entries of ``v1``) are merged, keeping the smaller cap.
    """
    kind = kind.upper()
    v1 = np.atleast_1d(np.asarray(v1, float))
    a = np.atleast_1d(np.asarray(alpha, float))
    if v1.shape != a.shape:
        raise ChannelError("v1 and alpha differ in length")
    if np.any(v1 < -1e-12 * np.abs(v1).max()):
        raise ChannelError("leading right-singular vector has negative entries")
    v1 = np.maximum(v1, 0.0)
    total = v1.sum()
    if total <= 0:
        raise ChannelError("leading right-singular vector sums to zero")
    order = np.argsort(-a, kind="stable")
    vb = v1[order] / total
    ab = a[order]
    mean = float(vb @ ab)
    n = vb.size
    ks = range(1, n) if kind == "EC" else range(0, n)
    cum = np.r_[0.0, np.cumsum(vb)]
    tail = np.r_[np.cumsum((vb * ab)[::-1])[::-1], 0.0]  # tail[k] = sum_{i>=k} (0-based)
    th, cap = [], []
    for k in ks:
        c, b = float(cum[k]), float(tail[k])
        if c >= 1 - _DUP_TOL:
            continue  # (S - 1)_+ vanishes on [0, 1]
        if th and abs(c - th[-1]) <= _DUP_TOL:
            cap[-1] = min(cap[-1], b)
            continue
        th.append(c)
        cap.append(b)
    return SISOConstraintSet(kind, mean if kind == "EC" else None,
                             np.asarray(th), np.asarray(cap), float(sigma1 * total))


def _rank_one_parts(rc: ReducedChannel, alpha):
    if rc.r != 1:
        raise ChannelError(f"rank-one reduction needs rank 1, got {rc.r}")
    a = _as_profile(alpha).alpha
    if a.shape[0] != rc.n_t:
        raise ChannelError("alpha length does not match the channel")
    return rc.v1, a, float(rc.sigma[0])


def ec_constraints(rc: ReducedChannel, alpha) -> SISOConstraintSet:
    v1, a, s1 = _rank_one_parts(rc, alpha)
    return siso_constraints(v1, a, "EC", s1)


def bc_constraints(rc: ReducedChannel, alpha) -> SISOConstraintSet:
    v1, a, s1 = _rank_one_parts(rc, alpha)
    return siso_constraints(v1, a, "BC", s1)


def stop_loss(points, probs, c: float) -> float:
    """``E (S - c)_+`` for the discrete law ``P(S = points[i]) = probs[i]``."""
    points = np.asarray(points, float)
    probs = np.asarray(probs, float)
    return float(probs @ np.maximum(points - c, 0.0))


def siso_moment_spec(cs: SISOConstraintSet) -> MomentSpec:
    eq = (AffineCost(np.array([1.0]), cs.mean),) if cs.kind == "EC" else ()
    ineq = tuple(StopLossCost(c, b) for c, b in zip(cs.thresholds, cs.caps))
    return MomentSpec(1, Interval(0.0, 1.0), eq, ineq)


def gamma_siso(cs: SISOConstraintSet, settings: QuadratureSettings = QuadratureSettings(),
               tol: float = 1e-7) -> MaxEntSolution:
    """Largest entropy of ``S`` on ``[0, 1]`` under the constraint set (normalised units)."""
    if cs.kind == "EC" and not 0 < cs.mean < 1:
        return MaxEntSolution(-np.inf, DualPoint(np.inf, np.empty(0), np.empty(0)), 0.0, 0,
                              "degenerate")
    return solve_gamma_star(siso_moment_spec(cs), settings, tol=tol)


def gamma_rank_one(rc: ReducedChannel, alpha, kind: str = "EC",
                   settings: QuadratureSettings = QuadratureSettings()) -> MaxEntSolution:
    """Entropy exponent of a rank-one channel in output units.

    Deterministic inputs (``alpha_i`` in ``{0, 1}`` for EC, ``alpha_i = 0``
    for BC) are removed first and the remaining direction renormalised,
    which keeps the scalar problem strictly feasible.  The result adds
    ``log`` of the effective gain to the normalised entropy.
    """
    kind = kind.upper()
    v1, a, s1 = _rank_one_parts(rc, alpha)
    v1 = np.maximum(v1, 0.0)
    fixed = (a == 0.0) | (a == 1.0) if kind == "EC" else (a == 0.0)
    fixed |= v1 <= 1e-15 * v1.max()
    free = ~fixed
    if not free.any():
        return MaxEntSolution(-np.inf, DualPoint(np.inf, np.empty(0), np.empty(0)), 0.0, 0,
                              "degenerate")
    cs = siso_constraints(v1[free], a[free], kind, s1)
    sol = gamma_siso(cs, settings)
    if sol.status in ("infeasible", "degenerate"):
        return sol
    shift = float(np.log(cs.gain))
    return MaxEntSolution(sol.gamma + shift, DualPoint(sol.dual.nu - shift, sol.dual.u, sol.dual.lam),
                          sol.grad_norm, sol.n_quad, sol.status, sol.iterations,
                          {"siso_gamma": sol.gamma, "gain": cs.gain, "constraints": cs.to_dict()})
