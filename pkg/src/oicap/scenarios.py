"""Random channel ensembles: indoor line-of-sight VLC and lognormal fading.

Indoor model: four ceiling LEDs pointing down, a handheld user equipment
(UE) at 1 m height with four photodiodes (PDs).  The UE orientation is
given by intrinsic yaw (z'), pitch (x') and roll (y') rotations.  Gains
follow the Lambertian line-of-sight model and are divided by a frozen
per-receiver calibration constant so that the largest entry seen in a
large calibration ensemble is 1.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelMatrix, IntensityProfile, energy_ratios, epsilon_rank, reduce

log = logging.getLogger(__name__)

__all__ = [
    "RoomLayout",
    "UEPose",
    "ReceiverKind",
    "IndoorChannel",
    "rotation_matrix",
    "lambertian_gain",
    "random_pose",
    "gen_indoor",
    "calibrate_scale",
    "gen_lognormal",
    "EnsembleConfig",
    "EnsembleResult",
    "ensemble_run",
    "METRICS",
]


@dataclass(frozen=True)
class RoomLayout:
    dims: tuple = (6.0, 4.0, 3.2)
    leds: tuple = ((2.0, 1.0, 3.2), (2.0, -1.0, 3.2), (-2.0, 1.0, 3.2), (-2.0, -1.0, 3.2))
    lambert_order: float = 1.0
    fov_deg: float = 60.0
    ue_height: float = 1.0

    def __post_init__(self):
        if not 0 < self.fov_deg <= 90:
            raise ValueError("field of view must lie in (0, 90] degrees")
        L, W, Hh = self.dims
        for x, y, z in self.leds:
            if abs(x) > L / 2 or abs(y) > W / 2 or not 0 <= z <= Hh:
                raise ValueError(f"LED at {(x, y, z)} is outside the room")

    @property
    def led_array(self) -> np.ndarray:
        return np.asarray(self.leds, float)


class ReceiverKind(enum.Enum):
    """PD offsets and normals in the UE frame.

    MDR normals (+z', +x', -x', +y' in listing order) are an assumption;
    the layout only fixes positions.
    """

    SR = "SR"
    MDR = "MDR"

    @property
    def offsets(self) -> np.ndarray:
        if self is ReceiverKind.SR:
            return np.array([[0.03, 0.03, 0.0], [0.03, -0.03, 0.0],
                             [-0.03, 0.03, 0.0], [-0.03, -0.03, 0.0]])
        return np.array([[0.0, 0.0, 0.0], [0.03, 0.0, -0.005],
                         [-0.03, 0.0, -0.005], [0.0, 0.005, -0.005]])

    @property
    def normals(self) -> np.ndarray:
        if self is ReceiverKind.SR:
            return np.tile([0.0, 0.0, 1.0], (4, 1))
        return np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0],
                         [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


# Largest raw gain over 10^5 random poses (seed 20240607, see calibrate_scale).
CALIBRATION = {
    ReceiverKind.SR: 0.0651922932627119,
    ReceiverKind.MDR: 0.06510240318793449,
}
CALIBRATION_SEED = 20240607
CALIBRATION_SAMPLES = 100_000


@dataclass(frozen=True)
class UEPose:
    x: float
    y: float
    yaw: float
    pitch: float
    roll: float = 0.0
    z: float = 1.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def rotation_matrix(yaw: float, pitch: float, roll: float = 0.0) -> np.ndarray:
    """Intrinsic z'-x'-y' rotation: yaw first, then pitch, then roll."""
    cz, sz = np.cos(yaw), np.sin(yaw)
    cx, sx = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(roll), np.sin(roll)
    Rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    Ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    return Rz @ Rx @ Ry


def lambertian_gain(led_pos, pd_pos, pd_normal, m: float = 1.0, fov_deg: float = 60.0,
                    led_normal=(0.0, 0.0, -1.0)) -> float:
    """Line-of-sight gain ``(m+1)/(2 pi d^2) cos^m(phi) cos(psi)`` inside the field of view."""
    d_vec = np.asarray(pd_pos, float) - np.asarray(led_pos, float)
    d = np.linalg.norm(d_vec)
    if d == 0:
        raise ValueError("LED and PD coincide")
    u = d_vec / d
    cos_phi = float(u @ np.asarray(led_normal, float))
    n = np.asarray(pd_normal, float)
    cos_psi = float(-u @ n / np.linalg.norm(n))
    if cos_phi < 0 or cos_psi <= 0:
        return 0.0
    if cos_psi < np.cos(np.deg2rad(fov_deg)):
        return 0.0
    return (m + 1) / (2 * np.pi * d ** 2) * cos_phi ** m * cos_psi


def random_pose(rng: np.random.Generator, layout: RoomLayout = RoomLayout()) -> UEPose:
    """Uniform position on the floor plan; uniform yaw; Laplace pitch (41.39, 5.43 deg)."""
    L, W, _ = layout.dims
    x = rng.uniform(-L / 2, L / 2)
    y = rng.uniform(-W / 2, W / 2)
    yaw = rng.uniform(0.0, 2 * np.pi)
    pitch = np.deg2rad(rng.laplace(41.39, 5.43))
    return UEPose(x, y, yaw, pitch, 0.0, layout.ue_height)


def _raw_gains(layout: RoomLayout, kind: ReceiverKind, pose: UEPose) -> np.ndarray:
    R = rotation_matrix(pose.yaw, pose.pitch, pose.roll)
    pd_pos = pose.position + kind.offsets @ R.T
    pd_nrm = kind.normals @ R.T
    leds = layout.led_array
    H = np.empty((len(pd_pos), len(leds)))
    for i, (p, n) in enumerate(zip(pd_pos, pd_nrm)):
        for j, q in enumerate(leds):
            H[i, j] = lambertian_gain(q, p, n, layout.lambert_order, layout.fov_deg)
    return H


@dataclass(frozen=True)
class IndoorChannel:
    H: np.ndarray
    pose: UEPose
    kind: ReceiverKind

    @property
    def flagged(self) -> bool:
        """True when no PD sees any LED."""
        return not np.any(self.H > 0)

    def matrix(self) -> ChannelMatrix:
        return ChannelMatrix(self.H)


def calibrate_scale(layout: RoomLayout, kind: ReceiverKind, rng: np.random.Generator,
                    n: int = CALIBRATION_SAMPLES) -> float:
    """Largest raw gain entry over ``n`` random poses."""
    return max(_raw_gains(layout, kind, random_pose(rng, layout)).max() for _ in range(n))


def _scale(layout: RoomLayout, kind: ReceiverKind) -> float:
    if layout == RoomLayout() and CALIBRATION.get(kind):
        return CALIBRATION[kind]
    key = (layout, kind)
    if key not in _SCALE_CACHE:
        log.info("calibrating gain scale for %s (not the default layout)", kind.value)
        rng = np.random.default_rng(CALIBRATION_SEED)
        _SCALE_CACHE[key] = calibrate_scale(layout, kind, rng, CALIBRATION_SAMPLES // 10)
    return _SCALE_CACHE[key]


_SCALE_CACHE: dict = {}


def gen_indoor(layout: RoomLayout = RoomLayout(), kind: ReceiverKind = ReceiverKind.SR,
               pose: Optional[UEPose] = None, rng: Optional[np.random.Generator] = None) -> IndoorChannel:
    """4x4 LOS channel (rows: PDs, columns: LEDs) for a given or random pose."""
    kind = ReceiverKind(kind)
    if pose is None:
        if rng is None:
            raise ValueError("need a pose or a random generator")
        pose = random_pose(rng, layout)
    H = _raw_gains(layout, kind, pose) / _scale(layout, kind)
    H.setflags(write=False)
    return IndoorChannel(H, pose, kind)


def gen_lognormal(n_r: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. ``exp(N(0, 1))`` gains."""
    if n_r < 1 or n_t < 1:
        raise ValueError("dimensions must be >= 1")
    return np.exp(rng.standard_normal((n_r, n_t)))


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

METRICS = ("energy_ratio", "eps_rank", "rank", "slope_ec", "slope_bc", "R_L",
           "gamma_E", "gamma_B")


@dataclass
class EnsembleConfig:
    """Ensemble description; ``kind`` is ``SR``, ``MDR`` or ``lognormal``."""

    kind: str = "SR"
    samples: int = 1000
    alpha: Optional[list] = None
    metrics: list = field(default_factory=lambda: ["energy_ratio", "eps_rank"])
    eps: float = 0.95
    n_r: int = 4
    n_t: int = 4
    seed: int = 0
    rank_tol: float = 1e-10
    gl_nodes: int = 64
    qmc_log2: int = 17
    qmc_max_log2: int = 20

    def __post_init__(self):
        if self.kind not in ("SR", "MDR", "lognormal"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.samples < 0:
            raise ValueError("sample count must be nonnegative")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        needs_alpha = {"slope_ec", "slope_bc", "R_L", "gamma_E", "gamma_B"} & set(self.metrics)
        if needs_alpha and self.alpha is None:
            raise ValueError(f"metrics {sorted(needs_alpha)} need alpha")
        if self.alpha is not None:
            IntensityProfile(self.alpha)
            n_t = 4 if self.kind != "lognormal" else self.n_t
            if len(self.alpha) != n_t:
                raise ValueError(f"alpha must have {n_t} entries")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_json(cls, text: str) -> "EnsembleConfig":
        return cls(**json.loads(text))

    @classmethod
    def from_file(cls, path) -> "EnsembleConfig":
        return cls.from_json(Path(path).read_text())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def quad_settings(self):
        from .maxent.core import QuadratureSettings

        return QuadratureSettings(gl_nodes=self.gl_nodes, qmc_log2=self.qmc_log2,
                                  qmc_max_log2=self.qmc_max_log2, seed=self.seed % 2 ** 32)


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    rows: list
    failures: list

    def values(self, metric: str) -> np.ndarray:
        v = np.array([r.get(metric, np.nan) for r in self.rows], float)
        return v[np.isfinite(v)]

    def cdf(self, metric: str):
        """Sorted finite values and their empirical CDF levels."""
        v = np.sort(self.values(metric))
        return v, np.arange(1, v.size + 1) / max(v.size, 1)

    @property
    def cdfs(self) -> dict:
        return {m: self.cdf(m) for m in self.config.metrics}

    def write_csv(self, out_dir) -> list:
        """One row-per-sample table plus one CDF table per metric."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        cols = ["sample", "flag"] + list(self.config.metrics)
        p = out / "samples.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c, "")) for c in cols])
        paths.append(p)
        for m in self.config.metrics:
            v, F = self.cdf(m)
            p = out / f"cdf_{m}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([m, "cdf"])
                w.writerows([[_fmt(a), _fmt(b)] for a, b in zip(v, F)])
            paths.append(p)
        return paths


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{x:.9g}"
    return x


def _sample_channel(cfg: EnsembleConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.kind == "lognormal":
        return gen_lognormal(cfg.n_r, cfg.n_t, rng)
    return gen_indoor(RoomLayout(), ReceiverKind(cfg.kind), rng=rng).H


def _metrics_for(H: np.ndarray, cfg: EnsembleConfig) -> dict:
    from . import low_snr
    from .maxent.oic import gamma_B, gamma_E

    row = {}
    want = set(cfg.metrics)
    rc = reduce(H, cfg.rank_tol)
    if "energy_ratio" in want:
        row["energy_ratio"] = float(energy_ratios(rc.sigma)[0])
    if "eps_rank" in want:
        row["eps_rank"] = epsilon_rank(H, cfg.eps, cfg.rank_tol)
    if "rank" in want:
        row["rank"] = rc.r
    if want & {"slope_ec", "slope_bc", "R_L"}:
        G = low_snr.gram(H)
        a = np.asarray(cfg.alpha, float)
        if "slope_ec" in want:
            row["slope_ec"] = low_snr.slope_ec(G, a)
        if want & {"slope_bc", "R_L"}:
            alloc = low_snr.solve_bc_allocation(G, a)
            if "slope_bc" in want:
                row["slope_bc"] = 0.5 * alloc.value
            if "R_L" in want:
                row["R_L"] = (low_snr.ladder_best_beta(G, a)[1] / alloc.value
                              if alloc.value > 0 else np.nan)
    if want & {"gamma_E", "gamma_B"}:
        # only channels of rank n_t - 1 enter the entropy statistics
        if rc.r == H.shape[1] - 1:
            qs = cfg.quad_settings()
            if "gamma_E" in want:
                row["gamma_E"] = gamma_E(rc, cfg.alpha, qs).gamma
            if "gamma_B" in want:
                row["gamma_B"] = gamma_B(rc, cfg.alpha, qs).gamma
        else:
            row["gamma_E"] = row["gamma_B"] = np.nan
    return row


def _one_sample(args):
    k, seq, cfg = args
    rng = np.random.default_rng(seq)
    H = _sample_channel(cfg, rng)
    row = {"sample": k, "flag": ""}
    if not np.any(H > 0):
        row["flag"] = "zero_channel"
        return row, {"sample": k, "error": "zero channel"}
    try:
        ChannelMatrix(H) if H.shape[1] >= 2 else None
        row.update(_metrics_for(H, cfg))
        return row, None
    except Exception as exc:  # recorded, not fatal
        row["flag"] = "error"
        return row, {"sample": k, "error": f"{type(exc).__name__}: {exc}"}


def ensemble_run(config: EnsembleConfig, workers: Optional[int] = None) -> EnsembleResult:
    """Draw ``config.samples`` channels and evaluate the requested metrics.

    Every sample gets its own random stream spawned from ``config.seed``,
    so results do not depend on the number of workers
    (``OICAP_THREADS`` by default).
    """
    if workers is None:
        workers = int(os.environ.get("OICAP_THREADS", "1"))
    seqs = np.random.SeedSequence(config.seed).spawn(config.samples)
    jobs = [(k, s, config) for k, s in enumerate(seqs)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(_one_sample, jobs))
    else:
        out = [_one_sample(j) for j in jobs]
    rows = [r for r, _ in out]
    failures = [f for _, f in out if f is not None]
    return EnsembleResult(config, rows, failures)
