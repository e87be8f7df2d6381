"""High-SNR entropy exponents of the optical intensity channel of rank ``n_t - 1``.

``gamma_E`` and ``gamma_B`` are the largest differential entropies of
``S = H_tilde X`` over inputs with ``X in [0,1]^n_t`` and ``E X = alpha``
(respectively ``E X <= alpha``).  For corank one the input constraints
translate into three moment conditions on ``S`` alone, involving the
smallest fiber coordinate ``f_min``.
"""

from __future__ import annotations

import numpy as np

from ..channel import ChannelError, IntensityProfile, ReducedChannel, _as_profile
from ..zonotope import decompose, fmin_values
from .core import (
    AffineCost,
    DualPoint,
    FminCost,
    GibbsFamily,
    MaxEntSolution,
    MomentSpec,
    QuadratureSettings,
    _package,
    moments,
    refine_loop,
    solve_gamma_star,
    truncexp_entropy,
)

__all__ = [
    "ec_moment_spec",
    "bc_moment_spec",
    "gamma_E",
    "gamma_B",
    "bc_dual_value",
    "signaling_tau",
    "signaling_map",
]

# barrier weights for the BC interior-point path, coarse to fine
_MU_SCHEDULE = tuple(10.0 ** -k for k in range(0, 11))
_WARM_MU = 1e-6


def _check(rc: ReducedChannel, alpha) -> IntensityProfile:
    if not isinstance(rc, ReducedChannel):
        raise TypeError("expected a ReducedChannel (see oicap.channel.reduce)")
    rc.require_corank_one()
    prof = _as_profile(alpha)
    if prof.alpha.shape[0] != rc.n_t:
        raise ChannelError(f"alpha has {prof.alpha.shape[0]} entries, channel has {rc.n_t} inputs")
    return prof


def ec_moment_spec(rc: ReducedChannel, alpha, zd=None) -> MomentSpec:
    """Moment conditions on ``S`` equivalent to ``E X = alpha``, ``X in [0,1]^n_t``."""
    a = _check(rc, alpha).alpha
    v = rc.v_tail
    zd = decompose(rc) if zd is None else zd
    eq = tuple(AffineCost(np.eye(rc.r)[i], float(rc.H_tilde[i] @ a)) for i in range(rc.r))
    ineq = (FminCost(rc, float(v @ a)), FminCost(rc, float(v @ (1 - a)), reflect=True))
    return MomentSpec(rc.r, zd, eq, ineq)


def bc_moment_spec(rc: ReducedChannel, sol: MaxEntSolution, zd=None) -> MomentSpec:
    """Moment spec whose Gibbs density is the optimum of a ``gamma_B`` solve."""
    return ec_moment_spec(rc, sol.info["x_opt"], zd)


def _closed_form(rc, prof, free, means, status="converged"):
    if len(free) < rc.r:
        return MaxEntSolution(-np.inf, DualPoint(np.inf, np.empty(0), np.empty(0)), 0.0, 0,
                              "degenerate", info={"closed_form": True})
    det = abs(np.linalg.det(rc.H_tilde[:, free]))
    if det <= 1e-14 * np.prod(np.linalg.norm(rc.H_tilde[:, free], axis=0)):
        return MaxEntSolution(-np.inf, DualPoint(np.inf, np.empty(0), np.empty(0)), 0.0, 0,
                              "degenerate", info={"closed_form": True})
    g = float(np.log(det) + sum(truncexp_entropy(m) for m in means))
    return MaxEntSolution(g, DualPoint(-g, np.empty(0), np.empty(0)), 0.0, 0, status,
                          info={"closed_form": True, "free": list(map(int, free))})


def gamma_E(rc: ReducedChannel, alpha, settings: QuadratureSettings = QuadratureSettings(),
            tol: float = 1e-7) -> MaxEntSolution:
    """Entropy exponent under ``E X = alpha``.

    Inputs with ``alpha_i`` in ``{0, 1}`` are deterministic and drop out;
    if exactly ``r`` inputs remain free the answer is a product of
    truncated exponentials pushed through ``H_tilde``.
    """
    prof = _check(rc, alpha)
    a = prof.alpha
    if prof.pinned.size:
        free = np.setdiff1d(np.arange(rc.n_t), prof.pinned)
        return _closed_form(rc, prof, free, a[free])
    sol = solve_gamma_star(ec_moment_spec(rc, prof), settings, tol=tol)
    sol.info["x_opt"] = a.tolist()
    return sol


class _BCBarrier:
    """Log-barrier form of the BC dual.

    The positive parts ``alpha_i (z_i)_+`` with ``z = Mz theta`` become
    epigraph variables ``t_i >= max(z_i, 0)``; the variables are
    ``y = (u, lam1, lam2, t)`` and every inequality carries ``-mu log``.
    """

    def __init__(self, rc, alpha, rule):
        self.alpha = np.asarray(alpha, float)
        v = rc.v_tail
        self.r = rc.r
        self.n = rc.r + 2
        self.Mz = np.column_stack([rc.H_tilde.T, v, -v])
        self.lin = np.r_[np.zeros(rc.r), 0.0, v.sum()]
        S = rule.points
        A = np.column_stack([S, fmin_values(rc, S),
                             fmin_values(rc, rc.H_tilde.sum(axis=1)[None, :] - S)])
        self.gibbs = GibbsFamily(rule, A)

    def start(self):
        return np.r_[np.zeros(self.r), 1.0, 1.0, np.ones(self.alpha.size)]

    def feasible(self, y):
        th, t = y[: self.n], y[self.n:]
        return np.all(th[self.r:] > 0) and np.all(t > 0) and np.all(t - self.Mz @ th > 0)

    def kinked(self, theta):
        """Exact dual objective at ``theta``: an upper bound on gamma_B."""
        z = self.Mz @ theta
        return float(self.alpha @ np.maximum(z, 0) + self.lin @ theta + self.gibbs(theta)[0])

    def x_estimate(self, y, mu):
        th, t = y[: self.n], y[self.n:]
        return mu / (t - self.Mz @ th)

    def kkt_residual(self, y, mu):
        th = y[: self.n]
        x = np.clip(self.x_estimate(y, mu), 0.0, self.alpha)
        _, gL, _ = self.gibbs(th)
        g = self.Mz.T @ x + self.lin + gL
        lower = np.r_[np.full(self.r, -np.inf), 0.0, 0.0]
        return float(np.linalg.norm(th - np.maximum(th - g, lower)))

    def __call__(self, y, mu):
        n, r = self.n, self.r
        th, t = y[:n], y[n:]
        lam = th[r:]
        s = t - self.Mz @ th
        L, gL, HL = self.gibbs(th)
        f = (self.alpha @ t + self.lin @ th + L
             - mu * (np.log(lam).sum() + np.log(t).sum() + np.log(s).sum()))
        g_th = self.lin + gL + mu * (self.Mz.T @ (1.0 / s))
        g_th[r:] -= mu / lam
        g_t = self.alpha - mu / t - mu / s
        w = mu / s ** 2
        H_thth = HL + (self.Mz * w[:, None]).T @ self.Mz
        H_thth[r:, r:] += np.diag(mu / lam ** 2)
        H_tht = -(self.Mz * w[:, None]).T
        H_tt = np.diag(mu / t ** 2 + w)
        H = np.block([[H_thth, H_tht], [H_tht.T, H_tt]])
        return f, np.r_[g_th, g_t], H


def _barrier_path(obj: _BCBarrier, y0=None, tol=1e-7, max_newton=200):
    """Follow the central path for decreasing ``mu``; returns a result record."""
    from .core import _NewtonResult

    schedule = _MU_SCHEDULE
    if y0 is None or not obj.feasible(y0):
        y = obj.start()
    else:
        # a nearby centred point: skip the coarse part of the path
        y = np.array(y0, float)
        schedule = tuple(m for m in _MU_SCHEDULE if m <= _WARM_MU)
    its = 0
    best = None
    for mu in schedule:
        for _ in range(max_newton):
            f, g, H = obj(y, mu)
            try:
                d = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                d = -g
            dec = -(g @ d)
            # centred well past the accuracy this mu can deliver
            if dec <= 1e-8 * mu or dec < 1e-24:
                break
            # largest step keeping every barrier argument positive
            step = 1.0
            th, t = y[: obj.n], y[obj.n:]
            dth, dt = d[: obj.n], d[obj.n:]
            for cur, delta in ((th[obj.r:], dth[obj.r:]), (t, dt),
                               (t - obj.Mz @ th, dt - obj.Mz @ dth)):
                neg = delta < 0
                if neg.any():
                    step = min(step, 0.99 * np.min(-cur[neg] / delta[neg]))
            if dec < 1e-10 and step == 1.0:
                # quadratic region; changes in f are below roundoff, so
                # take the full step without a line search
                y = y + d
                its += 1
                continue
            while step > 1e-16:
                trial = y + step * d
                if obj.feasible(trial):
                    ft = obj(trial, mu)[0]
                    if np.isfinite(ft) and ft <= f - 1e-4 * step * dec:
                        break
                step *= 0.5
            if step <= 1e-16:
                break
            y = trial
            its += 1
        # a stage can still stall when the Hessian is badly conditioned; keep
        # the best-centred iterate seen
        kkt = obj.kkt_residual(y, mu)
        if best is None or kkt < best[0]:
            best = (kkt, y.copy(), mu)
    kkt, y, mu = best
    theta = y[: obj.n]
    res = _NewtonResult(theta, obj.kinked(theta), kkt, "", its)
    res.status = "converged" if kkt <= max(tol, 1e-5) else "max_iter"
    res.y, res.mu = y, mu
    return res


def bc_dual_value(rc: ReducedChannel, alpha, u, lam1, lam2, rule=None,
                  settings: QuadratureSettings = QuadratureSettings()) -> float:
    """Exact (kinked) BC dual objective; an upper bound on ``gamma_B``."""
    from .core import quadrature

    a = _check(rc, alpha).alpha
    if lam1 < 0 or lam2 < 0:
        raise ValueError("multipliers must be nonnegative")
    if rule is None:
        rule = quadrature(ec_moment_spec(rc, a), settings)
    return _BCBarrier(rc, a, rule).kinked(np.r_[np.atleast_1d(u), lam1, lam2])


def gamma_B(rc: ReducedChannel, alpha, settings: QuadratureSettings = QuadratureSettings(),
            tol: float = 1e-7) -> MaxEntSolution:
    """Entropy exponent under ``E X <= alpha``.

    The dual has positive parts ``alpha_i (z_i)_+``; it is solved by a
    log-barrier interior-point path on the epigraph form.  The reported
    value is the exact dual objective at the final multipliers.
    ``info["x_opt"]`` holds the optimal mean input, for which ``gamma_E``
    gives the same value.
    """
    prof = _check(rc, alpha)
    a = prof.alpha
    zero = np.flatnonzero(a == 0.0)
    if zero.size:
        free = np.setdiff1d(np.arange(rc.n_t), zero)
        sol = _closed_form(rc, prof, free, np.minimum(a[free], 0.5))
        sol.info["x_opt"] = np.minimum(a, 0.5).tolist()
        return sol

    spec = ec_moment_spec(rc, a)
    state = {}

    def once(rule, y0):
        obj = _BCBarrier(rc, a, rule)
        res = _barrier_path(obj, state.get("y"), tol=tol)
        state.update(y=res.y, obj=obj, mu=res.mu)
        return res

    res, rule = refine_loop(spec, settings, once)
    x = np.clip(state["obj"].x_estimate(state["y"], state["mu"]), 0.0, a)
    return _package(res, rc.r, rule.n, info={"x_opt": x.tolist(), "mu": state["mu"]})


def signaling_tau(rc: ReducedChannel, alpha, sol: MaxEntSolution, spec=None,
                  settings: QuadratureSettings = QuadratureSettings(), tol: float = 1e-6) -> float:
    """Mixing weight between the lowest and highest fiber points.

    Solves ``tau E f_min(S) + (1 - tau)(1^T v - E f_min(H1 - S)) = v^T alpha``.
    """
    a = _check(rc, alpha).alpha
    spec = ec_moment_spec(rc, a) if spec is None else spec
    v = rc.v_tail
    _, Eg, _ = moments(sol, spec, settings=settings)
    e_lo = Eg[0] + v @ a
    e_hi = v.sum() - (Eg[1] + v @ (1 - a))
    target = v @ a
    den = e_hi - e_lo
    if abs(den) <= 1e-12:
        return 1.0
    tau = (e_hi - target) / den
    if tau < -tol or tau > 1 + tol:
        raise ValueError(f"mixing weight {tau:.6g} outside [0, 1]; moments are infeasible")
    return float(np.clip(tau, 0.0, 1.0))


def signaling_map(rc: ReducedChannel, alpha, sol: MaxEntSolution, S, tau=None,
                  settings: QuadratureSettings = QuadratureSettings()) -> np.ndarray:
    """Map output samples ``S`` (rows) to inputs ``X`` with ``H_tilde X = S``."""
    a = _check(rc, alpha).alpha
    if tau is None:
        tau = signaling_tau(rc, a, sol, settings=settings)
    S = np.atleast_2d(np.asarray(S, float))
    v = rc.v_tail
    lo = fmin_values(rc, S)
    hi = v.sum() - fmin_values(rc, rc.H_tilde.sum(axis=1)[None, :] - S)
    lam = tau * lo + (1 - tau) * hi
    X = lam[:, None] * v[None, :] + S @ (rc.V1 / rc.sigma[None, :]).T
    if np.any(X < -1e-9) or np.any(X > 1 + 1e-9):
        raise ValueError("sample outside admissible region")
    # only roundoff can leave the cube here
    return np.clip(X, 0.0, 1.0)
