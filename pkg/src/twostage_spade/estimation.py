"""Estimators for the two-stage receiver.

Contents:

* centre-of-mass centroid estimator and its error variance,
* the Taylor-expanded (coarse) direct-detection estimator of ``theta``,
* the cubic closed-form BSPADE estimator, its exact-inversion counterpart and
  the misalignment-prior average,
* the marginal two-stage likelihood and its maximizer.

Internally everything runs in units of the PSF width.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from ._numerics import bin_positions, golden_section_max, hermgauss_normal
from .models import (
    LINE,
    TWO_POINT,
    ImagingSystem,
    ObjectModel,
    _bspade_prob_u,
    check_kind,
)
from .sampling import Stage1Record, Stage2Record

log = logging.getLogger(__name__)

CONVERGED = "converged"
BOUNDARY = "boundary"
DEGENERATE_ZERO = "degenerate-zero"

THETA_DEPENDENT = "theta-dependent"
FROZEN = "frozen"

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


class DegenerateDataError(ValueError):
    """Raised when an estimator receives no photons to work with."""


@dataclass(frozen=True)
class AlignmentPrior:
    """Zero-mean Gaussian prior on the total misalignment.

    ``variance_p`` comes from the centroid estimate, ``variance_s`` from
    systematic pointing error. A total variance of zero is a delta function.
    """

    variance_p: float
    variance_s: float = 0.0

    def __post_init__(self):
        if not (self.variance_p >= 0 and self.variance_s >= 0):
            raise ValueError("prior variances must be non-negative")
        if not math.isfinite(self.total):
            raise ValueError("prior variances must be finite")

    @property
    def total(self) -> float:
        return self.variance_p + self.variance_s

    def nodes(self, n: int = 41):
        """Gauss-Hermite nodes and weights against this prior."""
        if self.total == 0:
            return np.zeros(1), np.ones(1)
        z, w = hermgauss_normal(n)
        return math.sqrt(self.total) * z, w


@dataclass(frozen=True)
class LikelihoodConfig:
    """Numerical settings for the marginal likelihood; lengths in units of sigma."""

    bin_width: float | None = 1.0 / 64.0
    n_nodes: int = 41
    theta_max: float = 8.0
    tol: float = 1e-4
    prior_mode: str = THETA_DEPENDENT
    fallback_sigma_p: float = 10.0

    def __post_init__(self):
        if self.prior_mode not in (THETA_DEPENDENT, FROZEN):
            raise ValueError(f"unknown prior_mode {self.prior_mode!r}")
        if self.bin_width is not None and not self.bin_width > 0:
            raise ValueError("bin_width must be positive or None")

    def theta_grid(self) -> np.ndarray:
        """Coarse scan grid: fine below 2 sigma, coarser beyond."""
        top = self.theta_max
        parts = [np.arange(0.0, min(2.0, top), 0.05)]
        if top > 2.0:
            parts.append(np.arange(2.0, min(4.0, top), 0.1))
        if top > 4.0:
            parts.append(np.arange(4.0, top, 0.25))
        grid = np.concatenate(parts + [[top]])
        return np.unique(grid)


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: float
    phi_hat: float
    log_likelihood_at_max: float
    search_status: str


# ---------------------------------------------------------------------------
# centroid


def centroid_com(record: Stage1Record) -> float:
    if record.n1 == 0:
        raise DegenerateDataError("centroid undefined without stage-1 photons")
    return float(np.mean(record.positions))


def _second_moment_u(theta_u, kind):
    return np.asarray(theta_u, dtype=float) ** 2 / (4.0 if kind == TWO_POINT else 12.0)


def centroid_error_variance(n1, theta, kind, sys: ImagingSystem = ImagingSystem(),
                            fallback_sigma_p: float = 10.0):
    """Variance of the centre-of-mass estimate from ``n1`` photons.

    ``n1`` may be a (non-integer) expected count. With no photons the
    variance of a flat prior over the field of view, ``(fallback * sigma)^2``,
    is returned.
    """
    check_kind(kind)
    s2 = sys.sigma**2
    if n1 <= 0:
        return (fallback_sigma_p**2) * s2
    return s2 / n1 * (1.0 + _second_moment_u(np.asarray(theta) / sys.sigma, kind))


# ---------------------------------------------------------------------------
# coarse direct-detection estimator


def coarse_from_moments(n: int, sum_u2: float, sum_u4: float, kind: str) -> float:
    """Coarse estimate in sigma units from power sums of normalized deviations."""
    if n == 0:
        return 0.0
    num = sum_u2 - n  # = -sum(1 - u^2)
    if num <= 0:
        return 0.0
    if kind == TWO_POINT:
        den, scale = sum_u4, 2.0 * math.sqrt(3.0)
    else:
        den, scale = sum_u4 + 4.0 * sum_u2 - 2.0 * n, 2.0 * math.sqrt(15.0)
    if den <= 0:
        log.debug("coarse estimator degenerate: numerator %g, denominator %g", num, den)
        return 0.0
    return scale * math.sqrt(num / den)


def coarse_direct_ml(record: Stage1Record, phi_hat: float, kind: str,
                     sys: ImagingSystem = ImagingSystem()) -> float:
    """Explicit small-``theta`` approximation to the direct-detection ML estimate.

    Returns 0 whenever the mean squared normalized deviation is at most 1.
    """
    check_kind(kind)
    if record.n1 == 0:
        raise DegenerateDataError("coarse estimator needs at least one photon")
    u2 = ((record.positions - phi_hat) / sys.sigma) ** 2
    return sys.sigma * coarse_from_moments(record.n1, float(u2.sum()), float((u2 * u2).sum()), kind)


# ---------------------------------------------------------------------------
# BSPADE estimators

# polynomial parts of the expansion coefficients c1..c3 in q = xi^2/4sigma^2,
# each multiplied by g(0|xi,0) = exp(-q)
_CUBIC_SCALE = {TWO_POINT: (1.0, 1.0 / 6.0, 1.0 / 90.0), LINE: (1.0 / 3.0, 1.0 / 30.0, 1.0 / 630.0)}


def _cubic_theta_u(frac, xi_u, kind):
    """Closed-form cubic BSPADE estimate, sigma units, broadcasting over inputs."""
    frac = np.asarray(frac, dtype=float)
    q = 0.25 * np.asarray(xi_u, dtype=float) ** 2
    s1, s2, s3 = _CUBIC_SCALE[kind]
    p1 = s1 * (2.0 * q - 1.0)
    p2 = s2 * (4.0 * q * q - 12.0 * q + 3.0)
    p3 = s3 * (((8.0 * q - 60.0) * q + 90.0) * q - 15.0)
    with np.errstate(all="ignore"):
        a2 = p2 / p3
        a1 = p1 / p3
        # c0 / c3 with the common exp(-q) factored out
        a0 = (1.0 - frac * np.exp(q)) / p3
        p = 3.0 * a1 - a2 * a2
        v = -2.0 * a2**3 + 9.0 * a1 * a2 - 27.0 * a0
        rad = v * v + 4.0 * p**3
        real = rad >= 0
        w_real = 0.5 * (np.sqrt(np.where(real, rad, 0.0)) + v)
        r_real = np.cbrt(w_real)
        root_real = (r_real - a2 - p / r_real) / 3.0
        root = root_real.astype(complex)
        if not np.all(real):
            w_c = 0.5 * (np.sqrt(rad.astype(complex)) + v)
            r_c = w_c ** (1.0 / 3.0)
            root = np.where(real, root, (r_c - a2 - p / r_c) / 3.0)
        ok = (
            np.isfinite(root.real)
            & (np.abs(root.imag) <= 1e-9 * np.maximum(1.0, np.abs(root.real)))
            & (root.real >= 0)
        )
        theta = 4.0 * np.sqrt(np.where(ok, root.real, 0.0))
    return theta


def bspade_cubic_estimate(stage2: Stage2Record, xi: float, kind: str,
                          sys: ImagingSystem = ImagingSystem()) -> float:
    """Third-order closed-form BSPADE estimate of ``theta`` at known misalignment ``xi``.

    Non-physical roots (negative, or complex for the three-real-root branch
    of the closed form) are clamped to zero.
    """
    check_kind(kind)
    if stage2.n2 == 0:
        raise DegenerateDataError("BSPADE estimate needs n2 >= 1")
    return float(sys.sigma * _cubic_theta_u(stage2.fraction, xi / sys.sigma, kind))


def bspade_exact_inverse(stage2: Stage2Record, xi: float, kind: str,
                         sys: ImagingSystem = ImagingSystem(), theta_max: float = 8.0) -> float:
    """Solve ``g(0|xi, theta) = k/n2`` for ``theta`` by bracketing root search.

    Returns 0 when the observed fraction exceeds the aligned point-source
    value, and ``theta_max * sigma`` when no root lies in the bracket.
    """
    check_kind(kind)
    if stage2.n2 == 0:
        raise DegenerateDataError("BSPADE inversion needs n2 >= 1")
    f = stage2.fraction
    xi_u = xi / sys.sigma
    h = lambda t: float(_bspade_prob_u(xi_u, t, kind)) - f
    if h(0.0) <= 0:
        return 0.0
    if h(theta_max) > 0:
        log.debug("no BSPADE root below theta_max=%g", theta_max)
        return theta_max * sys.sigma
    t = optimize.brentq(h, 0.0, theta_max, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)
    return t * sys.sigma


def bspade_prior_averaged_estimate(stage2: Stage2Record, prior: AlignmentPrior, kind: str,
                                   sys: ImagingSystem = ImagingSystem(), n_nodes: int = 41) -> float:
    """Cubic estimate averaged over the misalignment prior."""
    check_kind(kind)
    if stage2.n2 == 0:
        raise DegenerateDataError("BSPADE estimate needs n2 >= 1")
    xi, w = prior.nodes(n_nodes)
    est = _cubic_theta_u(stage2.fraction, xi / sys.sigma, kind)
    return float(sys.sigma * np.dot(w, est))


def prior_averaged_table(n2: int, k: np.ndarray, prior_var_u: float, kind: str, n_nodes: int = 41):
    """Prior-averaged estimates for an array of ``k`` values (sigma units)."""
    xi, w = AlignmentPrior(prior_var_u).nodes(n_nodes)
    est = _cubic_theta_u(np.asarray(k, dtype=float)[:, None] / n2, xi[None, :], kind)
    return est @ w


# ---------------------------------------------------------------------------
# marginal two-stage likelihood


def log_direct_density_u(d, theta_u, kind):
    """``log Psi`` in sigma units for offsets ``d`` from the object centroid."""
    d = np.asarray(d, dtype=float)
    theta_u = np.asarray(theta_u, dtype=float)
    if kind == TWO_POINT:
        y = np.abs(0.5 * d * theta_u)
        return -0.5 * d * d - theta_u**2 / 8.0 + y + np.log1p(np.exp(-2.0 * y)) - _LOG2 - _HALF_LOG_2PI
    small = theta_u < 1e-6
    t = np.where(small, 1.0, theta_u)
    h = 0.5 * t
    # Phi(d + h) - Phi(d - h), evaluated on whichever tail keeps precision
    s = np.where(d > 0, -1.0, 1.0)
    la = special.log_ndtr(s * d + h)
    lb = special.log_ndtr(s * d - h)
    with np.errstate(divide="ignore"):
        out = la + np.log1p(-np.exp(lb - la)) - np.log(t)
    if np.any(small):
        out = np.where(small, -0.5 * d * d - _HALF_LOG_2PI, out)
    return out


class TwoStageData:
    """Stage-1 positions (binned) and stage-2 counts, in sigma units."""

    def __init__(self, stage1: Stage1Record, stage2: Stage2Record, sys: ImagingSystem,
                 config: LikelihoodConfig):
        u = stage1.positions / sys.sigma
        self.n1 = u.size
        self.mean = float(u.mean()) if self.n1 else 0.0
        if self.n1 == 0:
            self.centers, self.counts = np.empty(0), np.empty(0)
        elif config.bin_width is None:
            self.centers, self.counts = u, np.ones_like(u)
        else:
            self.centers, self.counts = bin_positions(u, config.bin_width)
        self.k = stage2.k
        self.n2 = stage2.n2


def _prior_var_u(theta_u, n1, sigma_s_u, kind, config, variance_p_u):
    if variance_p_u is not None:
        vp = np.full_like(theta_u, variance_p_u)
    elif n1 == 0:
        vp = np.full_like(theta_u, config.fallback_sigma_p**2)
    else:
        vp = (1.0 + _second_moment_u(theta_u, kind)) / n1
    return vp + sigma_s_u**2


def _log_likelihood_u(theta_u, data: TwoStageData, sigma_s_u, kind, config, variance_p_u=None):
    """Vectorized marginal log-likelihood over an array of theta (sigma units)."""
    theta_u = np.atleast_1d(np.asarray(theta_u, dtype=float))
    out = np.empty(theta_u.size)
    if data.n1 == 0 and data.n2 == 0:
        out[:] = 0.0
        return out
    z, w = hermgauss_normal(config.n_nodes)
    nb = max(data.centers.size, 1)
    chunk = max(1, int(4_000_000 // (nb * z.size)))
    tau2_all = _prior_var_u(theta_u, data.n1, sigma_s_u, kind, config, variance_p_u)
    for start in range(0, theta_u.size, chunk):
        th = theta_u[start:start + chunk][:, None]
        tau2 = tau2_all[start:start + chunk][:, None]
        delta = tau2 == 0
        tau2_safe = np.where(delta, 1.0, tau2)
        # quadrature centred on the stage-1 information about xi
        lam = data.n1 / (1.0 + _second_moment_u(th, kind))
        v = 1.0 / (lam + 1.0 / tau2_safe)
        mu = lam * data.mean * v
        xi = np.where(delta, 0.0, mu + np.sqrt(v) * z[None, :])
        logw = np.where(
            delta,
            np.where(np.arange(z.size) == 0, 0.0, -np.inf)[None, :],
            np.log(w)[None, :] - xi**2 / (2.0 * tau2_safe) + 0.5 * z[None, :] ** 2
            + 0.5 * np.log(v / tau2_safe),
        )
        total = logw.copy()
        if data.n1:
            d = data.centers[None, None, :] - xi[:, :, None]
            ld = log_direct_density_u(d, th[:, :, None], kind)
            total += np.einsum("tjb,b->tj", ld, data.counts)
        if data.n2:
            g = _bspade_prob_u(xi, th, kind)
            with np.errstate(divide="ignore"):
                total += special.xlogy(data.k, g) + special.xlogy(data.n2 - data.k, 1.0 - g)
        out[start:start + chunk] = special.logsumexp(total, axis=1)
    return out


def two_stage_log_likelihood(theta, stage1: Stage1Record, stage2: Stage2Record, sigma_s: float,
                             kind: str, sys: ImagingSystem = ImagingSystem(),
                             config: LikelihoodConfig = LikelihoodConfig(),
                             variance_p: float | None = None):
    """Log of the misalignment-marginalized joint likelihood of both stages.

    The misalignment prior variance is recomputed from the centroid error
    variance at each candidate ``theta`` unless ``variance_p`` fixes it.
    Accepts scalar or array ``theta``.
    """
    check_kind(kind)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be non-negative")
    s = sys.sigma
    data = TwoStageData(stage1, stage2, sys, config)
    vp = None if variance_p is None else variance_p / s**2
    out = _log_likelihood_u(theta.reshape(-1) / s, data, sigma_s / s, kind, config, vp)
    if not np.all(np.isfinite(out) | (out == -np.inf)):
        raise FloatingPointError(f"non-finite log-likelihood at theta={theta}")
    return float(out[0]) if theta.ndim == 0 else out.reshape(theta.shape)


def maximize_on_grid(f, grid: np.ndarray, tol: float):
    """Grid scan followed by golden-section refinement around the best node.

    ``f`` maps an array of thetas to values. Returns ``(x, fx, status)``.
    """
    vals = f(grid)
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    scalar = lambda t: float(f(np.array([t]))[0])
    x, fx = golden_section_max(scalar, lo, hi, tol)
    if vals[i] >= fx:
        x, fx = float(grid[i]), float(vals[i])
    status = BOUNDARY if (x - grid[0] < tol or grid[-1] - x < tol) else CONVERGED
    return float(x), float(fx), status


def two_stage_ml(stage1: Stage1Record, stage2: Stage2Record, sigma_s: float, kind: str,
                 sys: ImagingSystem = ImagingSystem(), config: LikelihoodConfig = LikelihoodConfig(),
                 variance_p: float | None = None) -> EstimateReport:
    """Maximum marginal-likelihood estimate of ``theta`` from both stages."""
    check_kind(kind)
    s = sys.sigma
    if stage1.n1 == 0 and stage2.n2 == 0:
        return EstimateReport(0.0, 0.0, 0.0, DEGENERATE_ZERO)
    data = TwoStageData(stage1, stage2, sys, config)
    phi_hat = data.mean * s
    vp = None if variance_p is None else variance_p / s**2
    if vp is None and config.prior_mode == FROZEN and data.n1:
        th_d = coarse_direct_ml(stage1, phi_hat, kind, sys) / s
        vp = float(centroid_error_variance(data.n1, th_d, kind))
    f = lambda t: _log_likelihood_u(t, data, sigma_s / s, kind, config, vp)
    x, fx, status = maximize_on_grid(f, config.theta_grid(), config.tol)
    if not math.isfinite(fx):
        return EstimateReport(0.0, phi_hat, fx, DEGENERATE_ZERO)
    return EstimateReport(x * s, phi_hat, fx, status)


def direct_ml(record: Stage1Record, phi_hat: float, kind: str, sys: ImagingSystem = ImagingSystem(),
              config: LikelihoodConfig = LikelihoodConfig()) -> float:
    """Direct-detection ML estimate of ``theta`` with the centroid fixed at ``phi_hat``."""
    check_kind(kind)
    if record.n1 == 0:
        raise DegenerateDataError("direct ML needs at least one photon")
    u = (record.positions - phi_hat) / sys.sigma
    if config.bin_width is None:
        centers, counts = u, np.ones_like(u)
    else:
        centers, counts = bin_positions(u, config.bin_width)
    return sys.sigma * direct_ml_binned(centers, counts, kind, config)


def direct_ml_binned(centers, counts, kind, config: LikelihoodConfig = LikelihoodConfig()) -> float:
    """Direct ML in sigma units from offsets (already centred) and their counts."""
    f = lambda t: log_direct_density_u(centers[None, :], np.asarray(t)[:, None], kind) @ counts
    x, _, _ = maximize_on_grid(f, config.theta_grid(), config.tol)
    return x
