"""Single imaging trials: fixed allocation and the adaptive switching controller.

Simulation frame: the true object centroid sits at 0. Stage-1 photons are
generated slice by slice (``checkpoints`` equal slices of the integration
time), each slice drawing from its own substream, so different policies
run on the same seed see the same direct-detection photons.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import (
    EstimateReport,
    LikelihoodConfig,
    coarse_from_moments,
    direct_ml_binned,
    two_stage_ml,
)
from .information import AlphaStarTable, alpha_star_table
from .models import ImagingSystem, MisalignmentState, ObjectModel, bspade_prob, check_kind
from .sampling import (
    STAGE1,
    STAGE2,
    SYSTEMATIC,
    RandomStream,
    Stage1Record,
    Stage2Record,
    sample_bspade,
    sample_poisson_count,
    sample_positions,
    sample_systematic_misalignment,
)

FIXED = "fixed"
ADAPTIVE = "adaptive"
_PARTIAL = 1


@dataclass(frozen=True)
class AlphaPolicy:
    mode: str = ADAPTIVE
    fixed_value: float = 0.5

    def __post_init__(self):
        if self.mode not in (FIXED, ADAPTIVE):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not 0.0 <= self.fixed_value <= 1.0:
            raise ValueError("fixed allocation must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "AlphaPolicy":
        """``direct``, ``adaptive`` or ``fixed:<alpha>``."""
        text = text.strip()
        if text == "direct":
            return cls(FIXED, 1.0)
        if text == ADAPTIVE:
            return cls(ADAPTIVE)
        if text.startswith("fixed:"):
            return cls(FIXED, float(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse policy {text!r}")

    @property
    def name(self) -> str:
        if self.mode == ADAPTIVE:
            return ADAPTIVE
        if self.fixed_value == 1.0:
            return "direct"
        return f"fixed:{self.fixed_value:g}"


@dataclass(frozen=True)
class TrialConfig:
    n_photons: float
    kind: str
    theta: float
    sigma_s: float = 0.0
    policy: AlphaPolicy = AlphaPolicy()
    checkpoints: int = 100
    seed: int = 0
    stream: int = 0
    sigma: float = 1.0
    likelihood: LikelihoodConfig = LikelihoodConfig()
    # polish the Taylor estimate with a direct ML fit before switching
    refine_coarse: bool = True

    def __post_init__(self):
        check_kind(self.kind)
        if not self.n_photons > 0:
            raise ValueError("n_photons must be positive")
        if self.checkpoints < 1:
            raise ValueError("checkpoints must be >= 1")
        if not self.theta >= 0:
            raise ValueError("theta must be non-negative")

    @property
    def system(self) -> ImagingSystem:
        return ImagingSystem(self.sigma)

    @property
    def obj(self) -> ObjectModel:
        return ObjectModel(self.kind, self.theta)

    def rng(self) -> RandomStream:
        return RandomStream(self.seed, self.stream)


@dataclass(frozen=True)
class TraceRow:
    checkpoint: int
    n_t: int
    theta_hat_Dt: float
    alpha_t: float
    alpha_star: float
    switched: bool


TRACE_COLUMNS = ["checkpoint", "n_t", "theta_hat_Dt", "alpha_t", "alpha_star", "switched"]


@dataclass
class TrialOutcome:
    alpha_used: float
    switch_checkpoint: int | None
    theta_hat: float
    phi_hat: float
    stage1: Stage1Record
    stage2: Stage2Record
    report: EstimateReport
    misalignment: MisalignmentState
    theta_true: float
    trace: list = field(default_factory=list)

    @property
    def squared_error(self) -> float:
        return (self.theta_hat - self.theta_true) ** 2


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([r.checkpoint, r.n_t, repr(r.theta_hat_Dt), repr(r.alpha_t), repr(r.alpha_star),
                        int(r.switched)])


def _slice(cfg: TrialConfig, j: int, fraction: float = 1.0) -> np.ndarray:
    """Lab-frame photon positions recorded during time slice ``j``."""
    rng = cfg.rng().child(STAGE1, j) if fraction == 1.0 else cfg.rng().child(STAGE1, j, _PARTIAL)
    n = sample_poisson_count(fraction * cfg.n_photons / cfg.checkpoints, rng)
    return sample_positions(n, 0.0, cfg.obj, cfg.system, rng).positions


def _finish(cfg: TrialConfig, lab: np.ndarray, alpha: float, switch_checkpoint, trace) -> TrialOutcome:
    """Align the sorter, run the BSPADE stage and estimate from both stages."""
    root = cfg.rng()
    xi_s = sample_systematic_misalignment(cfg.sigma_s, root.child(SYSTEMATIC))
    phi_hat_lab = float(lab.mean()) if lab.size else 0.0
    axis = phi_hat_lab - xi_s
    mis = MisalignmentState(xi_p=0.0 - phi_hat_lab, xi_s=xi_s)
    stage1 = Stage1Record(lab - axis)
    rng2 = root.child(STAGE2)
    n2 = sample_poisson_count((1.0 - alpha) * cfg.n_photons, rng2)
    g = float(np.clip(bspade_prob(mis.xi, cfg.obj, cfg.system), 0.0, 1.0))
    stage2 = sample_bspade(n2, g, rng2)
    report = two_stage_ml(stage1, stage2, cfg.sigma_s, cfg.kind, cfg.system, cfg.likelihood)
    return TrialOutcome(alpha, switch_checkpoint, report.theta_hat, report.phi_hat, stage1, stage2,
                        report, mis, cfg.theta, trace)


def run_fixed_trial(cfg: TrialConfig, alpha: float) -> TrialOutcome:
    """Trial with the allocation ratio set in advance."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    m = alpha * cfg.checkpoints
    full = int(math.floor(m + 1e-9))
    parts = [_slice(cfg, j) for j in range(full)]
    rest = m - full
    if rest > 1e-9:
        parts.append(_slice(cfg, full, rest))
    lab = np.concatenate(parts) if parts else np.empty(0)
    return _finish(cfg, lab, alpha, None, [])


class _Histogram:
    """Growing histogram on a fixed lattice of width ``h`` (lab frame)."""

    def __init__(self, h: float):
        self.h = h
        self.offset = 0
        self.counts = np.zeros(0)

    def add(self, u: np.ndarray) -> None:
        if u.size == 0:
            return
        idx = np.floor(u / self.h).astype(np.int64)
        lo, hi = int(idx.min()), int(idx.max())
        if self.counts.size == 0:
            self.offset, self.counts = lo, np.zeros(hi - lo + 1)
        if lo < self.offset or hi >= self.offset + self.counts.size:
            new_lo = min(lo, self.offset)
            new_hi = max(hi, self.offset + self.counts.size - 1)
            grown = np.zeros(new_hi - new_lo + 1)
            grown[self.offset - new_lo:self.offset - new_lo + self.counts.size] = self.counts
            self.offset, self.counts = new_lo, grown
        self.counts += np.bincount(idx - self.offset, minlength=self.counts.size)

    def occupied(self):
        nz = np.nonzero(self.counts)[0]
        return (nz + self.offset + 0.5) * self.h, self.counts[nz]


def run_adaptive_trial(cfg: TrialConfig, table: AlphaStarTable | None = None) -> TrialOutcome:
    """Trial under the switching controller.

    After each time slice the direct-detection estimate of ``theta`` is
    compared against the optimal allocation; the receiver switches to BSPADE
    the first time the elapsed fraction exceeds it, and never switches back.
    """
    if table is None:
        table = alpha_star_table(float(cfg.n_photons), float(cfg.sigma_s), cfg.kind, float(cfg.sigma))
    s = cfg.sigma
    c = cfg.checkpoints
    lab_parts = []
    sums = np.zeros(5)  # n, sum u, u^2, u^3, u^4 (sigma units)
    hist = _Histogram(cfg.likelihood.bin_width or 1.0 / 64.0)
    trace = []
    switch = None
    for j in range(1, c + 1):
        x = _slice(cfg, j - 1)
        lab_parts.append(x)
        u = x / s
        sums += [u.size, u.sum(), (u**2).sum(), (u**3).sum(), (u**4).sum()]
        if cfg.refine_coarse:
            hist.add(u)
        if j == c:
            break  # integration time exhausted
        n = int(sums[0])
        alpha_t = j / c
        if n == 0:
            trace.append(TraceRow(j, 0, math.nan, alpha_t, math.nan, False))
            continue
        m = sums[1] / n
        s2 = sums[2] - 2 * m * sums[1] + n * m * m
        s4 = sums[4] - 4 * m * sums[3] + 6 * m * m * sums[2] - 4 * m**3 * sums[1] + n * m**4
        est = coarse_from_moments(n, s2, s4, cfg.kind)
        a_star = float(table(est * s))
        if alpha_t > a_star and cfg.refine_coarse:
            centers, counts = hist.occupied()
            est = direct_ml_binned(centers - m, counts, cfg.kind, cfg.likelihood)
            a_star = float(table(est * s))
        switched = alpha_t > a_star
        trace.append(TraceRow(j, n, est * s, alpha_t, a_star, switched))
        if switched:
            switch = j
            break
    alpha = switch / c if switch is not None else 1.0
    return _finish(cfg, np.concatenate(lab_parts), alpha, switch, trace)


def run_trial(cfg: TrialConfig, table: AlphaStarTable | None = None) -> TrialOutcome:
    if cfg.policy.mode == ADAPTIVE:
        return run_adaptive_trial(cfg, table)
    return run_fixed_trial(cfg, cfg.policy.fixed_value)
