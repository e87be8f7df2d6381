"""Channel matrices, intensity profiles and SVD-based reduction.

A MIMO optical intensity channel ``Y = H X + Z`` is described by a
nonnegative ``n_r x n_t`` gain matrix and a per-antenna ratio ``alpha`` of
average to peak intensity.  :func:`reduce` removes the null part of the
output so that the remaining ``r x n_t`` matrix has full row rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ChannelError",
    "ChannelMatrix",
    "IntensityProfile",
    "ReducedChannel",
    "NoiseLevel",
    "validate",
    "reduce",
    "epsilon_rank",
    "energy_ratios",
    "rank_one_factorization",
]

DEFAULT_RANK_TOL = 1e-10
SIGN_TOL = 1e-12


class ChannelError(ValueError):
    """Raised for malformed channel matrices or intensity profiles."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelMatrix:
    H: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.ndim != 2:
            raise ChannelError("channel matrix must be two-dimensional")
        if not np.all(np.isfinite(H)):
            raise ChannelError("channel matrix contains NaN or Inf")
        if np.any(H < 0):
            raise ChannelError("negative gain in channel matrix")
        if not np.any(H > 0):
            raise ChannelError("channel matrix is all zero")
        if H.shape[1] < 2:
            raise ChannelError("need at least two transmit antennas")
        object.__setattr__(self, "H", _frozen(H))

    @property
    def n_r(self) -> int:
        return self.H.shape[0]

    @property
    def n_t(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class IntensityProfile:
    """Average-to-peak intensity ratios, one per transmit antenna.

    ``alpha`` is kept in user order; ``order_perm`` sorts it descending
    (stable, so equal entries keep their relative order).
    """

    alpha: np.ndarray
    order_perm: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if a.ndim != 1:
            raise ChannelError("alpha must be a vector")
        if not np.all(np.isfinite(a)):
            raise ChannelError("alpha contains NaN or Inf")
        if np.any(a < 0) or np.any(a > 1):
            raise ChannelError("alpha entries must lie in [0, 1]")
        object.__setattr__(self, "alpha", _frozen(a))
        perm = np.argsort(-a, kind="stable")
        perm.setflags(write=False)
        object.__setattr__(self, "order_perm", perm)

    @property
    def sorted(self) -> np.ndarray:
        return self.alpha[self.order_perm]

    @property
    def pinned(self) -> np.ndarray:
        """Indices whose input is deterministic (alpha in {0, 1})."""
        return np.flatnonzero((self.alpha == 0.0) | (self.alpha == 1.0))


@dataclass(frozen=True)
class NoiseLevel:
    sigma_noise: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma_noise) and self.sigma_noise > 0):
            raise ChannelError("noise standard deviation must be positive")


@dataclass(frozen=True)
class ReducedChannel:
    """SVD artifacts of a channel matrix with the sign convention fixed.

    ``H_tilde = diag(sigma) @ V1.T`` is the full-row-rank equivalent
    channel; ``v_tail`` is the last right-singular vector and is only
    set when ``r == n_t - 1``.
    """

    r: int
    sigma: np.ndarray
    V1: np.ndarray
    v_tail: Optional[np.ndarray]
    H_tilde: np.ndarray
    U: np.ndarray

    @property
    def n_t(self) -> int:
        return self.V1.shape[0]

    @property
    def v1(self) -> np.ndarray:
        return self.V1[:, 0]

    def require_corank_one(self):
        if self.v_tail is None:
            raise ChannelError(
                f"operation needs rank n_t - 1 = {self.n_t - 1}, got rank {self.r}")

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "sigma": self.sigma.tolist(),
            "V1": self.V1.tolist(),
            "v_tail": None if self.v_tail is None else self.v_tail.tolist(),
            "H_tilde": self.H_tilde.tolist(),
        }


def _as_channel(H) -> ChannelMatrix:
    return H if isinstance(H, ChannelMatrix) else ChannelMatrix(H)


def _as_profile(alpha) -> IntensityProfile:
    return alpha if isinstance(alpha, IntensityProfile) else IntensityProfile(alpha)


def validate(H, alpha) -> tuple[ChannelMatrix, IntensityProfile]:
    """Check a channel/profile pair and return them as validated types."""
    ch = _as_channel(H)
    prof = _as_profile(alpha)
    if prof.alpha.shape[0] != ch.n_t:
        raise ChannelError(
            f"alpha has {prof.alpha.shape[0]} entries but H has {ch.n_t} columns")
    return ch, prof


def reduce(H, rank_tol: float = DEFAULT_RANK_TOL) -> ReducedChannel:
    """Reduce ``H`` to the full-row-rank model ``diag(sigma) V1^T``.

    Singular values with ``sigma_i / sigma_1 <= rank_tol`` are treated as
    zero.  Each singular pair ``(u_i, v_i)`` is flipped jointly so that
    ``1^T v_i`` is positive; the first one is mandatory and an
    ambiguous zero sum raises :class:`ChannelError`.
    """
    if not 0 < rank_tol < 1:
        raise ValueError("rank_tol must lie in (0, 1)")
    ch = _as_channel(H)
    U, s, Vt = np.linalg.svd(ch.H, full_matrices=True)
    V = Vt.T.copy()
    U = U.copy()
    r = int(np.sum(s / s[0] > rank_tol))

    for i in range(min(r, V.shape[1])):
        total = V[:, i].sum()
        if i == 0 and abs(total) <= SIGN_TOL:
            raise ChannelError("1^T v_1 vanishes; sign convention is ambiguous")
        if abs(total) <= SIGN_TOL:
            # tie-break on the largest-magnitude entry
            total = V[np.argmax(np.abs(V[:, i])), i]
        if total < 0:
            V[:, i] *= -1
            U[:, i] *= -1

    n_t = V.shape[0]
    v_tail = None
    if r == n_t - 1:
        v_tail = V[:, -1].copy()
        if v_tail.sum() < 0:
            v_tail *= -1
        v_tail = _frozen(v_tail)

    sigma = s[:r]
    V1 = V[:, :r]
    return ReducedChannel(
        r=r,
        sigma=_frozen(sigma),
        V1=_frozen(V1),
        v_tail=v_tail,
        H_tilde=_frozen(sigma[:, None] * V1.T),
        U=_frozen(U),
    )


def energy_ratios(sigma) -> np.ndarray:
    """Cumulative squared singular-value energy fractions."""
    e = np.asarray(sigma, dtype=float) ** 2
    return np.cumsum(e) / e.sum()


def epsilon_rank(H, eps: float, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Least ``i`` whose leading ``i`` singular values hold a fraction ``eps`` of the energy."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    rc = reduce(H, rank_tol)
    ratios = energy_ratios(rc.sigma)
    ratios[-1] = 1.0
    # relative slack so exact ratios such as 9/10 survive the SVD roundoff
    return int(np.argmax(ratios >= eps * (1 - 1e-12)) + 1)


def rank_one_factorization(H, rank_tol: float = DEFAULT_RANK_TOL):
    """Write a rank-one nonnegative ``H`` as ``outer(w, b)`` with ``w, b >= 0``.

    ``b`` is parallel to ``v_1``; the scaling puts the first significant
    entry of ``w`` at 1.
    """
    ch = _as_channel(H)
    rc = reduce(ch, rank_tol)
    if rc.r != 1:
        raise ChannelError(f"channel has rank {rc.r}, expected 1")
    w = rc.sigma[0] * rc.U[:, 0]
    b = rc.v1.copy()
    lead = np.flatnonzero(np.abs(w) > 1e-12 * np.abs(w).max())[0]
    scale = w[lead]
    w, b = w / scale, b * scale
    # exact zeros for entries that are roundoff
    w[np.abs(w) < 1e-14 * np.abs(w).max()] = 0.0
    b[np.abs(b) < 1e-14 * np.abs(b).max()] = 0.0
    if np.any(w < -1e-12) or np.any(b < -1e-12):
        raise ChannelError("rank-one factors are not nonnegative")
    return np.maximum(w, 0.0), np.maximum(b, 0.0)
