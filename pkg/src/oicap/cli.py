"""Command-line entry point.

Exit codes: 0 success, 1 solver did not converge (or the moments are
infeasible), 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelError, NoiseLevel, reduce, validate
from .io import jsonable, parse_alpha, read_channel

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("oicap")


def _emit(payload: dict, out):
    text = json.dumps(jsonable(payload), indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)


def _settings(args):
    from .maxent.core import QuadratureSettings

    return QuadratureSettings(gl_nodes=args.quad_nodes, qmc_log2=args.qmc_log2,
                              qmc_max_log2=max(args.qmc_log2, args.qmc_max_log2),
                              seed=args.seed % 2 ** 32)


def _load(args):
    ch = read_channel(args.channel)
    if args.alpha is None:
        return ch, None
    ch, prof = validate(ch, parse_alpha(args.alpha))
    return ch, prof


def _exit_for(status: str) -> int:
    return EXIT_OK if status in ("converged", "degenerate") else EXIT_SOLVER


def cmd_reduce(args) -> int:
    ch = read_channel(args.channel)
    rc = reduce(ch, args.rank_tol)
    _emit({"n_r": ch.n_r, "n_t": ch.n_t, **rc.to_dict()}, args.out)
    return EXIT_OK


def _solve(rc, prof, mode, settings):
    from .maxent.oic import gamma_B, gamma_E
    from .rank_one import gamma_rank_one

    out = {}
    if rc.r == rc.n_t - 1:
        sol = (gamma_E if mode == "EC" else gamma_B)(rc, prof, settings)
        out["path"] = "corank_one"
        if rc.r == 1:
            out["rank_one_gamma"] = gamma_rank_one(rc, prof, mode, settings).gamma
    elif rc.r == 1:
        sol = gamma_rank_one(rc, prof, mode, settings)
        out["path"] = "rank_one"
    else:
        raise ChannelError(f"entropy exponent needs rank 1 or n_t - 1, got rank {rc.r}")
    return sol, out


def cmd_gamma(args) -> int:
    from .maxent.core import epi_lower_bound

    ch, prof = _load(args)
    if prof is None:
        raise ChannelError("--alpha is required")
    rc = reduce(ch, args.rank_tol)
    sol, extra = _solve(rc, prof, args.mode, _settings(args))
    payload = {"mode": args.mode, "r": rc.r, **extra, **sol.to_dict()}
    if args.sigma:
        payload["epi_lower_bound"] = {
            f"{s:g}": epi_lower_bound(sol.gamma, rc.r, NoiseLevel(s).sigma_noise) for s in args.sigma}
    _emit(payload, args.out)
    return _exit_for(sol.status)


def cmd_slope(args) -> int:
    from . import low_snr

    ch, prof = _load(args)
    if prof is None:
        raise ChannelError("--alpha is required")
    G = low_snr.gram(ch)
    a = prof.alpha
    payload = {"mode": args.mode, "v_max_ec": low_snr.v_max_ec(G, a),
               "slope_ec": low_snr.slope_ec(G, a)}
    status = "converged"
    if args.mode == "BC":
        alloc = low_snr.solve_bc_allocation(G, a)
        beta, lad = low_snr.ladder_best_beta(G, a)
        status = alloc.meta.get("status", "converged")
        payload.update(x_star=alloc.x, value=alloc.value, slope_bc=0.5 * alloc.value,
                       ladder_beta=beta, ladder_value=lad,
                       R_L=lad / alloc.value if alloc.value > 0 else float("nan"))
    _emit(payload, args.out)
    return _exit_for(status)


def cmd_ensemble(args) -> int:
    from .scenarios import EnsembleConfig, ensemble_run

    cfg = EnsembleConfig.from_file(args.config) if args.config else EnsembleConfig()
    overrides = {"seed": args.seed if args.seed_given else None, "samples": args.samples}
    if args.alpha is not None:
        overrides["alpha"] = parse_alpha(args.alpha).tolist()
    d = {k: v for k, v in vars(cfg).items()}
    d.update({k: v for k, v in overrides.items() if v is not None})
    cfg = EnsembleConfig(**d)
    res = ensemble_run(cfg)
    out = Path(args.out or "ensemble_out")
    paths = res.write_csv(out)
    summary = {"samples": len(res.rows), "failures": len(res.failures),
               "files": [str(p) for p in paths]}
    for m in cfg.metrics:
        v = res.values(m)
        if v.size:
            summary[f"median_{m}"] = float(np.median(v))
    print(json.dumps(jsonable(summary), indent=2))
    return EXIT_OK


def cmd_density(args) -> int:
    from .maxent.core import density_values, moments, sample_density
    from .maxent.oic import bc_moment_spec, ec_moment_spec, gamma_B, gamma_E
    from .zonotope import decompose

    ch, prof = _load(args)
    if prof is None:
        raise ChannelError("--alpha is required")
    rc = reduce(ch, args.rank_tol)
    rc.require_corank_one()
    settings = _settings(args)
    if args.mode == "EC":
        sol = gamma_E(rc, prof, settings)
    else:
        sol = gamma_B(rc, prof, settings)
    if sol.status != "converged" or sol.info.get("closed_form"):
        print(f"no density available (status {sol.status})", file=sys.stderr)
        return _exit_for(sol.status) or EXIT_SOLVER
    zd = decompose(rc)
    spec = ec_moment_spec(rc, prof, zd) if args.mode == "EC" else bc_moment_spec(rc, sol, zd)
    n = args.samples
    if rc.r == 1:
        lo, hi = zd.bounding_box()
        S = np.linspace(lo[0], hi[0], n)[:, None]
    else:
        S = sample_density(sol, spec, np.random.default_rng(args.seed), n, settings)
    p = density_values(sol, spec, S)
    mass = moments(sol, spec, settings=settings)[2]
    out = Path(args.out or "density.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"s{i + 1}" for i in range(rc.r)] + ["p"])
        for s, v in zip(S, p):
            w.writerow([f"{x:.9g}" for x in s] + [f"{v:.9g}"])
    print(json.dumps(jsonable({"gamma": sol.gamma, "mass": mass, "rows": n, "file": str(out)})))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oicap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, alpha=True, mode=True):
        sp.add_argument("--channel", required=True, help="CSV or JSON channel matrix")
        if alpha:
            sp.add_argument("--alpha", help="comma-separated average-to-peak ratios")
        if mode:
            sp.add_argument("--mode", choices=("EC", "BC"), default="EC", type=str.upper)
        sp.add_argument("--rank-tol", type=float, default=1e-10)
        sp.add_argument("--out")

    def quad(sp):
        sp.add_argument("--quad-nodes", type=int, default=64)
        sp.add_argument("--qmc-log2", type=int, default=17)
        sp.add_argument("--qmc-max-log2", type=int, default=20)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("reduce", help="SVD reduction report")
    common(sp, alpha=False, mode=False)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("gamma", help="high-SNR entropy exponent")
    common(sp)
    quad(sp)
    sp.add_argument("--sigma", type=float, nargs="*", help="noise levels for the EPI bound")
    sp.set_defaults(func=cmd_gamma)

    sp = sub.add_parser("slope", help="low-SNR slope")
    common(sp)
    sp.set_defaults(func=cmd_slope)

    sp = sub.add_parser("ensemble", help="random channel ensemble statistics")
    sp.add_argument("--config", help="JSON ensemble configuration")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--alpha")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("density", help="maximum-entropy density samples as CSV")
    common(sp)
    quad(sp)
    sp.add_argument("--samples", type=int, default=1000)
    sp.set_defaults(func=cmd_density)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "ensemble":
        args.seed_given = args.seed is not None
    try:
        for s in getattr(args, "sigma", None) or ():
            NoiseLevel(s)
        return args.func(args)
    except (ChannelError, ValueError, OSError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
