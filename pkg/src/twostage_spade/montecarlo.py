"""Monte Carlo sweeps over separation, pointing error and receiver policy.

Trial ``i`` of every cell uses stream ``(seed, i)``. Because stage-1 photons,
the pointing error and the stage-2 draws are keyed only by that stream, all
cells share common random numbers: policies differ only in how much of the
same photon record they consume.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .adaptive import ADAPTIVE, AlphaPolicy, TrialConfig, run_trial
from .estimation import DEGENERATE_ZERO, LikelihoodConfig
from .information import (
    BoundCurve,
    alpha_star_table,
    crb_curve,
    crb_direct,
    qcrb_curve,
    qcrb_two_point,
)
from .models import TWO_POINT, ImagingSystem, check_kind

RESULT_COLUMNS = [
    "object", "policy", "theta_over_sigma", "sigma_s_over_sigma", "N", "trials",
    "mse", "mse_stderr", "bias", "mean_alpha", "qcrb", "crb_direct",
]


@dataclass(frozen=True)
class SweepConfig:
    thetas: tuple
    sigma_s: tuple = (0.0,)
    n_photons: float = 1e4
    trials: int = 500
    policies: tuple = ("direct", "fixed:0.5", ADAPTIVE)
    seed: int = 0
    kind: str = TWO_POINT
    sigma: float = 1.0
    checkpoints: int = 100
    workers: int = 1
    likelihood: LikelihoodConfig = LikelihoodConfig()

    def __post_init__(self):
        check_kind(self.kind)
        if self.trials < 2:
            raise ValueError("need at least 2 trials per cell")
        if not self.thetas or not self.sigma_s or not self.policies:
            raise ValueError("theta grid, sigma_s list and policies must be non-empty")
        for p in self.policies:
            AlphaPolicy.parse(p)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("likelihood")
        d.update({f"likelihood.{k}": v for k, v in asdict(self.likelihood).items()})
        return d


@dataclass
class CellResult:
    kind: str
    policy: str
    theta: float
    sigma_s: float
    n_photons: float
    trials: int
    mse: float
    mse_stderr: float
    bias: float
    mean_alpha: float
    qcrb: float
    crb_direct: float
    n_degenerate: int = 0
    squared_errors: np.ndarray = field(default=None, repr=False)
    alphas: np.ndarray = field(default=None, repr=False)


@dataclass
class SweepResult:
    cells: list
    config: SweepConfig | None = None
    bounds: list = field(default_factory=list)

    def cell(self, policy: str, theta: float, sigma_s: float = 0.0) -> CellResult:
        for c in self.cells:
            if c.policy == policy and math.isclose(c.theta, theta) and math.isclose(c.sigma_s, sigma_s):
                return c
        raise KeyError((policy, theta, sigma_s))


def _run_one(args):
    cfg, table = args
    out = run_trial(cfg, table)
    return out.theta_hat, out.alpha_used, out.report.search_status == DEGENERATE_ZERO


def summarize(kind, policy, theta, sigma_s, n_photons, sigma, estimates, alphas, degenerate) -> CellResult:
    est = np.asarray(estimates, dtype=float)
    sq = (est - theta) ** 2
    n = sq.size
    sys = ImagingSystem(sigma)
    qcrb = qcrb_two_point(n_photons, sys) if kind == TWO_POINT else math.nan
    crb = crb_direct(theta, n_photons, kind, sys)
    return CellResult(
        kind, policy, float(theta), float(sigma_s), float(n_photons), n,
        float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n)), float(est.mean() - theta),
        float(np.mean(alphas)), qcrb, crb, int(np.sum(degenerate)), sq, np.asarray(alphas, dtype=float),
    )


def run_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """Run every (sigma_s, theta, policy) cell; results are independent of ``workers``."""
    cells = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for ss in cfg.sigma_s:
            table = None
            if ADAPTIVE in cfg.policies:
                table = alpha_star_table(float(cfg.n_photons), float(ss), cfg.kind, float(cfg.sigma))
            for theta in cfg.thetas:
                for pname in cfg.policies:
                    policy = AlphaPolicy.parse(pname)
                    jobs = [
                        (TrialConfig(cfg.n_photons, cfg.kind, float(theta), float(ss), policy,
                                     cfg.checkpoints, cfg.seed, i, cfg.sigma, cfg.likelihood), table)
                        for i in range(cfg.trials)
                    ]
                    results = list(pool.map(_run_one, jobs, chunksize=8)) if pool else list(map(_run_one, jobs))
                    est, alphas, degen = zip(*results)
                    cell = summarize(cfg.kind, policy.name, theta, ss, cfg.n_photons, cfg.sigma, est, alphas, degen)
                    cells.append(cell)
                    if progress:
                        progress(cell)
    finally:
        if pool:
            pool.shutdown()
    sys = ImagingSystem(cfg.sigma)
    bounds = [crb_curve(cfg.thetas, cfg.n_photons, cfg.kind, sys)]
    if cfg.kind == TWO_POINT:
        bounds.append(qcrb_curve(cfg.thetas, cfg.n_photons, sys))
    return SweepResult(cells, cfg, bounds)


def _fmt(x) -> str:
    return repr(float(x))


def manifest_path(path) -> str:
    return str(path) + ".manifest.txt"


def export_results(result: SweepResult, path) -> None:
    """Write the per-cell table and a key-value run manifest next to it."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_COLUMNS)
            for c in result.cells:
                s = result.config.sigma if result.config else 1.0
                w.writerow([c.kind, c.policy, _fmt(c.theta / s), _fmt(c.sigma_s / s), _fmt(c.n_photons),
                            c.trials, _fmt(c.mse), _fmt(c.mse_stderr), _fmt(c.bias), _fmt(c.mean_alpha),
                            _fmt(c.qcrb), _fmt(c.crb_direct)])
        with open(manifest_path(path), "w") as fh:
            fh.write(f"code_version = {__version__}\n")
            if result.config is not None:
                for k, v in result.config.as_dict().items():
                    fh.write(f"{k} = {format_value(v)}\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def format_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_results(path, sigma: float = 1.0) -> list:
    """Parse an exported results file back into :class:`CellResult` rows."""
    cells = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cells.append(CellResult(
                row["object"], row["policy"], float(row["theta_over_sigma"]) * sigma,
                float(row["sigma_s_over_sigma"]) * sigma, float(row["N"]), int(row["trials"]),
                float(row["mse"]), float(row["mse_stderr"]), float(row["bias"]), float(row["mean_alpha"]),
                float(row["qcrb"]), float(row["crb_direct"]),
            ))
    return cells
