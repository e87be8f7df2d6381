"""Moment-constrained maximum-entropy problems solved through their dual.

For costs ``h_i`` (``E h_i = 0``) and ``g_j`` (``E g_j <= 0``) on a compact
support ``S`` the maximum differential entropy equals

    min_{u, lam >= 0}  log \\int_S exp(-u.h(s) - lam.g(s)) ds,

obtained from the full dual by minimising out the normalisation
multiplier ``nu``.  The optimum density is ``exp(nu - u.h - lam.g)`` with
``nu = -gamma``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import qmc

from ..zonotope import ZonotopeDecomposition, fmin_kinks_1d, fmin_values, locate

log = logging.getLogger(__name__)

__all__ = [
    "Interval",
    "AffineCost",
    "FminCost",
    "StopLossCost",
    "MomentSpec",
    "QuadratureSettings",
    "QuadratureRule",
    "DualPoint",
    "MaxEntSolution",
    "quadrature",
    "log_partition",
    "solve_gamma_star",
    "dual_objective",
    "density_eval",
    "moments",
    "epi_lower_bound",
    "truncexp_entropy",
    "sample_density",
]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("interval support must have positive length")

    dim = 1

    @property
    def volume(self) -> float:
        return self.hi - self.lo

    def contains(self, s) -> bool:
        s = float(np.ravel(s)[0])
        return self.lo <= s <= self.hi


# ---------------------------------------------------------------------------
# cost functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineCost:
    """``a . s - c``"""

    a: np.ndarray
    c: float

    def __call__(self, S):
        return np.atleast_2d(S) @ np.atleast_1d(self.a) - self.c

    def kinks(self):
        return np.empty(0)


@dataclass(frozen=True)
class FminCost:
    """``f_min(s) - cap``, or ``f_min(H_tilde 1 - s) - cap`` when reflected."""

    rc: object
    cap: float
    reflect: bool = False

    def __call__(self, S):
        S = np.atleast_2d(S)
        if self.reflect:
            S = self.rc.H_tilde.sum(axis=1)[None, :] - S
        return fmin_values(self.rc, S) - self.cap

    def kinks(self):
        return fmin_kinks_1d(self.rc, self.reflect) if self.rc.r == 1 else np.empty(0)


@dataclass(frozen=True)
class StopLossCost:
    """Stop-loss moment ``(s - threshold)_+ - cap`` on the real line."""

    threshold: float
    cap: float

    def __call__(self, S):
        return np.maximum(np.atleast_2d(S)[:, 0] - self.threshold, 0.0) - self.cap

    def kinks(self):
        return np.array([self.threshold])


@dataclass(frozen=True)
class MomentSpec:
    dim: int
    support: object
    equalities: tuple = ()
    inequalities: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))

    @property
    def costs(self) -> tuple:
        return self.equalities + self.inequalities

    @property
    def n_eq(self) -> int:
        return len(self.equalities)

    @property
    def n_ineq(self) -> int:
        return len(self.inequalities)

    def cost_matrix(self, S) -> np.ndarray:
        S = np.atleast_2d(S)
        if not self.costs:
            return np.zeros((S.shape[0], 0))
        return np.column_stack([c(S) for c in self.costs])

    def contains(self, s) -> bool:
        if isinstance(self.support, ZonotopeDecomposition):
            return locate(self.support, s, tol=1e-9) is not None
        return self.support.contains(s)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSettings:
    """Integration controls.

    ``gl_nodes`` Gauss-Legendre nodes per axis (per kink-free piece in 1-D,
    per cell and axis in 2-D); ``qmc_log2`` scrambled Sobol points per cell
    (as a power of two) for ``r >= 3``, doubled up to ``qmc_max_log2`` while
    the entropy moves by more than ``refine_tol``.
    """

    gl_nodes: int = 64
    qmc_log2: int = 17
    qmc_max_log2: int = 20
    qmc_refine: bool = True
    refine_tol: float = 1e-4
    seed: int = 20240607


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def _composite_gl(breaks, nodes: int) -> QuadratureRule:
    x, w = leggauss(nodes)
    P, W = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 1e-15 * max(1.0, abs(b)):
            continue
        P.append(0.5 * (b - a) * x + 0.5 * (a + b))
        W.append(0.5 * (b - a) * w)
    return QuadratureRule(np.concatenate(P)[:, None], np.concatenate(W))


def _interval_rule(lo, hi, extra, nodes) -> QuadratureRule:
    pts = [lo, hi]
    for k in extra:
        k = np.asarray(k, float).ravel()
        pts.extend(k[(k > lo) & (k < hi)])
    return _composite_gl(np.unique(pts), nodes)


def quadrature(spec: MomentSpec, settings: QuadratureSettings = QuadratureSettings(),
               qmc_log2: Optional[int] = None) -> QuadratureRule:
    """Nodes and weights over the support of ``spec``.

    One-dimensional supports are split at every kink of the cost
    functions so that each piece carries a smooth integrand.
    """
    sup = spec.support
    kinks = [c.kinks() for c in spec.costs]
    if isinstance(sup, Interval):
        return _interval_rule(sup.lo, sup.hi, kinks, settings.gl_nodes)
    if not isinstance(sup, ZonotopeDecomposition):
        raise TypeError(f"unsupported support {type(sup).__name__}")

    r = sup.dim
    if r == 1:
        lo, hi = sup.bounding_box()
        edges = [c.translate for c in sup.cells]
        return _interval_rule(lo[0], hi[0], kinks + edges, settings.gl_nodes)

    if r == 2:
        x, w = leggauss(settings.gl_nodes)
        t = 0.5 * (x + 1.0)
        wt = 0.5 * w
        T = np.array(list(itertools.product(t, t)))
        WT = np.outer(wt, wt).ravel()
    else:
        m = settings.qmc_log2 if qmc_log2 is None else qmc_log2
    P, W = [], []
    for k, cell in enumerate(sup.cells):
        if r >= 3:
            # per-cell stream so cell order fixes the rule bit-for-bit
            eng = qmc.Sobol(d=r, scramble=True, seed=np.random.default_rng([settings.seed, k]))
            T = eng.random_base2(m)
            WT = np.full(T.shape[0], 1.0 / T.shape[0])
        P.append(cell.translate + T @ cell.B.T)
        W.append(cell.det_abs * WT)
    return QuadratureRule(np.vstack(P), np.concatenate(W))


# ---------------------------------------------------------------------------
# Gibbs family and dual
# ---------------------------------------------------------------------------


class GibbsFamily:
    """``theta -> log sum_k w_k exp(-A_k . theta)`` with derivatives."""

    def __init__(self, rule: QuadratureRule, A: np.ndarray):
        self.logw = np.log(rule.weights)
        self.A = A

    def weights(self, theta):
        z = self.logw - self.A @ theta
        L = logsumexp(z)
        return L, np.exp(z - L)

    def __call__(self, theta):
        L, p = self.weights(theta)
        mean = p @ self.A
        C = self.A - mean
        hess = (C * p[:, None]).T @ C
        return L, -mean, hess


def log_partition(spec: MomentSpec, u, lam, rule: Optional[QuadratureRule] = None,
                  settings: QuadratureSettings = QuadratureSettings()):
    """Log-partition function and its gradient over ``(u, lam)``.

    The gradient is minus the expected cost vector under the normalised
    Gibbs density.
    """
    lam = np.atleast_1d(np.asarray(lam, float))
    if np.any(lam < 0):
        raise ValueError("inequality multipliers must be nonnegative")
    if rule is None:
        rule = quadrature(spec, settings)
    theta = np.r_[np.atleast_1d(np.asarray(u, float)), lam]
    fam = GibbsFamily(rule, spec.cost_matrix(rule.points))
    L, g, _ = fam(theta)
    return L, g


def dual_objective(spec: MomentSpec, u, lam, rule: Optional[QuadratureRule] = None,
                   settings: QuadratureSettings = QuadratureSettings()) -> float:
    """Dual value with ``nu`` minimised out (an upper bound on the entropy)."""
    return log_partition(spec, u, lam, rule, settings)[0]


@dataclass(frozen=True)
class DualPoint:
    nu: float
    u: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class MaxEntSolution:
    gamma: float
    dual: DualPoint
    grad_norm: float
    n_quad: int
    status: str
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        def _py(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "gamma": self.gamma,
            "status": self.status,
            "nu": self.dual.nu,
            "u": self.dual.u.tolist(),
            "lambda": self.dual.lam.tolist(),
            "grad_norm": self.grad_norm,
            "n_quad": self.n_quad,
            "iterations": self.iterations,
            "info": {k: _py(v) for k, v in self.info.items()},
        }


@dataclass
class _NewtonResult:
    theta: np.ndarray
    f: float
    grad_norm: float
    status: str
    iterations: int


def projected_newton(fun: Callable, theta0, n_free: int, tol: float = 1e-7,
                     max_iter: int = 500, max_norm: float = 1e6) -> _NewtonResult:
    """Minimise a smooth convex ``fun`` over ``theta[n_free:] >= 0``.

    ``fun`` returns ``(value, gradient, hessian)``.  Variables pinned at
    their bound with a positive gradient are held fixed; the remaining
    ones take a damped Newton step, projected and backtracked (Armijo).
    """
    theta = np.array(theta0, dtype=float)
    n = theta.size
    lower = np.r_[np.full(n_free, -np.inf), np.zeros(n - n_free)]
    theta = np.maximum(theta, lower)
    f, g, H = fun(theta)
    gn = np.inf
    for it in range(max_iter):
        pg = theta - np.maximum(theta - g, lower)
        gn = float(np.linalg.norm(pg))
        if gn <= tol:
            return _NewtonResult(theta, f, gn, "converged", it)
        if np.linalg.norm(theta) > max_norm or not np.isfinite(f):
            return _NewtonResult(theta, f, gn, "infeasible", it)

        eps = min(1e-6, gn)
        active = (theta - lower <= eps) & (g > 0)
        free = ~active
        d = np.where(active, g, 0.0)
        if free.any():
            Hf = H[np.ix_(free, free)]
            reg = 1e-13 * max(1.0, np.trace(Hf))
            try:
                d[free] = np.linalg.solve(Hf + reg * np.eye(Hf.shape[0]), g[free])
            except np.linalg.LinAlgError:
                d[free] = g[free]
            if g[free] @ d[free] <= 0:
                d[free] = g[free]

        t = 1.0
        accepted = False
        while t > 1e-16:
            trial = np.maximum(theta - t * d, lower)
            ft, gt, Ht = fun(trial)
            if np.isfinite(ft) and ft <= f + 1e-4 * (g @ (trial - theta)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Newton direction useless at this precision; try plain gradient
            t = 1.0 / max(1.0, np.linalg.norm(H, 2))
            while t > 1e-20:
                trial = np.maximum(theta - t * g, lower)
                ft, gt, Ht = fun(trial)
                if np.isfinite(ft) and ft < f:
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            status = "converged" if gn <= 100 * tol else "max_iter"
            return _NewtonResult(theta, f, gn, status, it)
        theta, f, g, H = trial, ft, gt, Ht
    pg = theta - np.maximum(theta - g, lower)
    gn = float(np.linalg.norm(pg))
    return _NewtonResult(theta, f, gn, "converged" if gn <= tol else "max_iter", max_iter)


def _solve_on_rule(spec, rule, theta0, tol, max_iter):
    fam = GibbsFamily(rule, spec.cost_matrix(rule.points))
    return projected_newton(fam, theta0, spec.n_eq, tol=tol, max_iter=max_iter)


def _needs_refinement(spec, settings):
    sup = spec.support
    return (isinstance(sup, ZonotopeDecomposition) and sup.dim >= 3 and settings.qmc_refine)


def refine_loop(spec: MomentSpec, settings: QuadratureSettings, solve_once):
    """Run ``solve_once(rule, theta0)`` on growing QMC rules until stable.

    Deterministic rules (1-D and 2-D) are solved once.
    """
    rule = quadrature(spec, settings)
    res = solve_once(rule, None)
    if not _needs_refinement(spec, settings) or res.status != "converged":
        return res, rule
    m = settings.qmc_log2
    while m < settings.qmc_max_log2:
        m += 1
        rule2 = quadrature(spec, settings, qmc_log2=m)
        res2 = solve_once(rule2, res.theta)
        delta = abs(res2.f - res.f)
        log.debug("qmc refinement 2^%d: gamma %.6g -> %.6g", m, res.f, res2.f)
        res, rule = res2, rule2
        if res.status != "converged" or delta < settings.refine_tol:
            break
    return res, rule


def solve_gamma_star(spec: MomentSpec, settings: QuadratureSettings = QuadratureSettings(),
                     tol: float = 1e-7, max_iter: int = 500) -> MaxEntSolution:
    """Maximum differential entropy (nats) under the moment constraints of ``spec``."""
    n = spec.n_eq + spec.n_ineq

    def once(rule, theta0):
        return _solve_on_rule(spec, rule, np.zeros(n) if theta0 is None else theta0, tol, max_iter)

    res, rule = refine_loop(spec, settings, once)
    return _package(res, spec.n_eq, rule.n)


def _package(res: _NewtonResult, n_eq: int, n_quad: int, info=None) -> MaxEntSolution:
    theta = res.theta
    gamma = float(res.f) if res.status != "infeasible" else -np.inf
    dual = DualPoint(nu=-gamma, u=theta[:n_eq].copy(), lam=theta[n_eq:].copy())
    return MaxEntSolution(gamma, dual, res.grad_norm, n_quad, res.status, res.iterations,
                          dict(info or {}))


def _theta(sol: MaxEntSolution):
    return np.r_[sol.dual.u, sol.dual.lam]


def density_eval(sol: MaxEntSolution, spec: MomentSpec, s) -> float:
    """Maximum-entropy density at ``s`` (zero outside the support)."""
    s = np.atleast_1d(np.asarray(s, float))
    if not spec.contains(s):
        return 0.0
    a = spec.cost_matrix(s[None, :])[0]
    return float(np.exp(sol.dual.nu - a @ _theta(sol)))


def density_values(sol: MaxEntSolution, spec: MomentSpec, S) -> np.ndarray:
    """Vectorised density for points already known to lie in the support."""
    return np.exp(sol.dual.nu - spec.cost_matrix(S) @ _theta(sol))


def moments(sol: MaxEntSolution, spec: MomentSpec, rule: Optional[QuadratureRule] = None,
            settings: QuadratureSettings = QuadratureSettings()):
    """Expected costs ``(E h, E g)`` and total mass under the solution density."""
    if rule is None:
        rule = quadrature(spec, settings)
    p = rule.weights * density_values(sol, spec, rule.points)
    E = p @ spec.cost_matrix(rule.points)
    return E[: spec.n_eq], E[spec.n_eq:], float(p.sum())


def sample_density(sol: MaxEntSolution, spec: MomentSpec, rng: np.random.Generator, n: int,
                   settings: QuadratureSettings = QuadratureSettings()) -> np.ndarray:
    """Rejection sampler for the solution density (uniform proposal on the support)."""
    from ..zonotope import sample_uniform

    sup = spec.support
    rule = quadrature(spec, settings)
    pmax = 1.1 * density_values(sol, spec, rule.points).max()

    def propose(m):
        if isinstance(sup, Interval):
            return sup.lo + (sup.hi - sup.lo) * rng.random((m, 1))
        return sample_uniform(sup, rng, m)

    out = []
    have = 0
    while have < n:
        m = max(1024, 2 * (n - have))
        S = propose(m)
        p = density_values(sol, spec, S)
        if p.max() > pmax:
            pmax = 1.1 * p.max()
            out, have = [], 0
            continue
        keep = S[rng.random(m) * pmax < p]
        out.append(keep)
        have += keep.shape[0]
    return np.vstack(out)[:n]


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def epi_lower_bound(gamma: float, k: int, sigma_noise: float) -> float:
    """Capacity lower bound ``(k/2) log(1 + exp(2 gamma/k) / (2 pi e sigma^2))`` in nats."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sigma_noise = getattr(sigma_noise, "sigma_noise", sigma_noise)
    if not sigma_noise > 0:
        raise ValueError("noise level must be positive")
    if gamma == -np.inf:
        return 0.0
    x = np.exp(2.0 * gamma / k) / (2 * np.pi * np.e * sigma_noise ** 2)
    return 0.5 * k * float(np.log1p(x))


def truncexp_entropy(mean: float) -> float:
    """Largest entropy of a law on ``[0, 1]`` with the given mean."""
    if not 0 <= mean <= 1:
        raise ValueError("mean must lie in [0, 1]")
    if mean in (0.0, 1.0):
        return -np.inf
    if abs(mean - 0.5) < 1e-14:
        return 0.0

    def m(t):  # mean of density prop. to exp(-t s) on [0, 1]
        if abs(t) < 1e-6:
            return 0.5 - t / 12.0
        return 1.0 / t - 1.0 / np.expm1(t)

    hi = 1.0
    f = lambda t: m(t) - mean  # noqa: E731
    while f(-hi) * f(hi) > 0:
        hi *= 2.0
    t = brentq(f, -hi, hi, xtol=1e-15, rtol=1e-15)
    if abs(t) < 1e-8:
        return 0.0
    # log normaliser of exp(-t s): log((1 - e^-t)/t), written stably
    logZ = np.log(-np.expm1(-t) / t) if t > 0 else -t + np.log(np.expm1(t) / t)
    return float(logZ + t * mean)
