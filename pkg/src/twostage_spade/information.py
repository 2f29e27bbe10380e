"""Fisher information, Cramer-Rao bounds and the optimal time allocation.

The direct-detection Fisher information is computed by quadrature of the
finite-difference score; the two printed closed forms are kept as
cross-checks. BSPADE estimator variance is computed exactly by enumerating
the binomial outcomes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from ._numerics import golden_section_max
from .estimation import AlignmentPrior, centroid_error_variance, prior_averaged_table
from .models import LINE, TWO_POINT, ImagingSystem, _bspade_prob_u, _direct_density_u, check_kind

CRB_DIRECT = "CRB_direct"
QCRB = "QCRB"
BSPADE_EXACT = "BSPADE_exact"
TWO_STAGE = "two_stage"

FD_STEP = 1e-4
_DENSITY_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# direct detection


@lru_cache(maxsize=4096)
def _fisher_direct_u(theta_u: float, kind: str, step: float = FD_STEP) -> float:
    if theta_u == 0:
        return 0.0

    def integrand(x):
        p = float(_direct_density_u(x, 0.0, theta_u, kind))
        if p < _DENSITY_FLOOR:
            return 0.0
        # the density is even in theta, so |theta - step| keeps theta = 0 exact
        dp = (float(_direct_density_u(x, 0.0, theta_u + step, kind))
              - float(_direct_density_u(x, 0.0, abs(theta_u - step), kind))) / (2.0 * step)
        return dp * dp / p

    half = 12.0 + 0.5 * theta_u
    pts = [-0.5 * theta_u, 0.0, 0.5 * theta_u] if theta_u > 0 else [0.0]
    val, _ = integrate.quad(integrand, -half, half, points=pts, limit=400, epsabs=1e-14, epsrel=1e-10)
    return val


def fisher_direct_numeric(theta: float, kind: str, sys: ImagingSystem = ImagingSystem()) -> float:
    """Per-photon direct-detection Fisher information about ``theta``."""
    check_kind(kind)
    if theta < 0:
        raise ValueError("theta must be non-negative")
    return _fisher_direct_u(float(theta / sys.sigma), kind) / sys.sigma**2


def fisher_direct_closed(theta: float, kind: str, sys: ImagingSystem = ImagingSystem()) -> float:
    """Printed one-dimensional-integral forms of the direct-detection information.

    Only meant as a cross-check of :func:`fisher_direct_numeric`.
    """
    check_kind(kind)
    if not theta > 0:
        raise ValueError("closed forms need theta > 0")
    t = theta / sys.sigma
    if kind == TWO_POINT:
        def f(x):
            return x * x * math.exp(-0.5 * (x + 0.5 * t) ** 2) / (1.0 + math.exp(min(-x * t, 700.0)))

        val, _ = integrate.quad(f, -12.0 - t, 12.0 + t, limit=400, epsabs=1e-14, epsrel=1e-11)
        return (0.25 - val / (2.0 * math.sqrt(2.0 * math.pi))) / sys.sigma**2

    def f(x):
        d = float(special.erf((x + 0.5 * t) / math.sqrt(2.0)) - special.erf((x - 0.5 * t) / math.sqrt(2.0)))
        if d <= 0:
            return 0.0
        e = math.exp(-0.5 * (x + 0.5 * t) ** 2) + math.exp(-0.5 * (x - 0.5 * t) ** 2)
        return e * e / (4.0 * math.pi * t * d)

    val, _ = integrate.quad(f, -12.0 - t, 12.0 + t, limit=400, epsabs=1e-14, epsrel=1e-11)
    return (val - 1.0 / t**2) / sys.sigma**2


def fisher_crosscheck(theta: float, kind: str, sys: ImagingSystem = ImagingSystem()) -> float:
    """Relative deviation of the closed form from the numeric information."""
    num = fisher_direct_numeric(theta, kind, sys)
    return (fisher_direct_closed(theta, kind, sys) - num) / num


def crb_direct(theta: float, n_photons: float, kind: str, sys: ImagingSystem = ImagingSystem()) -> float:
    """``1 / (n I_D(theta))``; ``inf`` where the information vanishes."""
    if n_photons <= 0:
        raise ValueError("n_photons must be positive")
    info = fisher_direct_numeric(theta, kind, sys)
    if info <= 0:
        return math.inf
    return 1.0 / (n_photons * info)


def qcrb_two_point(n_photons: float, sys: ImagingSystem = ImagingSystem()) -> float:
    """Quantum limit for two-point separation: ``4 sigma^2 / N``."""
    if not n_photons > 0:
        raise ValueError("n_photons must be positive")
    return 4.0 * sys.sigma**2 / n_photons


# ---------------------------------------------------------------------------
# BSPADE


def bspade_fisher_per_photon(theta: float, kind: str, sys: ImagingSystem = ImagingSystem()) -> float:
    """Aligned BSPADE information ``g'^2 / (g (1 - g))`` from the analytic derivative."""
    check_kind(kind)
    t = theta / sys.sigma
    if t == 0:
        # limit of the expression as theta -> 0
        return (0.25 if kind == TWO_POINT else 1.0 / 12.0) / sys.sigma**2
    if kind == TWO_POINT:
        g = math.exp(-t * t / 16.0)
        dg = -t / 8.0 * g
        one_minus = -math.expm1(-t * t / 16.0)
    else:
        g = 2.0 * math.sqrt(math.pi) / t * math.erf(t / 4.0)
        dg = (math.exp(-t * t / 16.0) - g) / t
        one_minus = 1.0 - g
    return dg * dg / (g * one_minus) / sys.sigma**2


def _k_window(n2, g, width):
    std = np.sqrt(n2 * g * (1.0 - g))
    lo = np.floor(n2 * g - width * std - 1.0)
    hi = np.ceil(n2 * g + width * std + 1.0)
    return int(max(0, lo.min())), int(min(n2, hi.max()))


def _bspade_mse_u(theta_u: float, n2: int, prior_var_u: float, kind: str, n_nodes: int = 41) -> float:
    xi, w = AlignmentPrior(prior_var_u).nodes(n_nodes)
    g = _bspade_prob_u(xi, theta_u, kind)
    width = 8.0
    while True:
        lo, hi = _k_window(n2, g, width)
        k = np.arange(lo, hi + 1)
        pmf = stats.binom.pmf(k[:, None], n2, g[None, :]) @ w
        if 1.0 - pmf.sum() < 1e-10 or (lo == 0 and hi == n2):
            break
        width *= 1.5
    est = prior_averaged_table(n2, k, prior_var_u, kind, n_nodes)
    return float(np.dot((est - theta_u) ** 2, pmf))


def bspade_estimator_variance(theta: float, n2: int, prior: AlignmentPrior, kind: str,
                              sys: ImagingSystem = ImagingSystem(), n_nodes: int = 41) -> float:
    """Mean squared error of the prior-averaged cubic BSPADE estimator.

    Exact sum over outcomes ``k`` (truncated to where the outcome mass is
    above 1e-10 in total) of the squared error weighted by the
    prior-marginalized binomial probability.
    """
    check_kind(kind)
    if n2 < 1:
        raise ValueError("n2 must be at least 1")
    s2 = sys.sigma**2
    return _bspade_mse_u(theta / sys.sigma, int(n2), prior.total / s2, kind, n_nodes) * s2


# ---------------------------------------------------------------------------
# two-stage allocation


def two_stage_variance(alpha: float, theta: float, n_photons: float, sigma_s: float, kind: str,
                       sys: ImagingSystem = ImagingSystem()) -> float:
    """Harmonic combination of the direct and BSPADE variances at allocation ``alpha``."""
    check_kind(kind)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    s = sys.sigma
    return _two_stage_variance_u(float(alpha), theta / s, float(n_photons), sigma_s / s, kind) * s * s


@lru_cache(maxsize=1_000_000)
def _two_stage_variance_u(alpha, theta_u, n_photons, sigma_s_u, kind):
    info = _fisher_direct_u(theta_u, kind)
    n1 = alpha * n_photons
    inv = 0.0
    if n1 > 0 and info > 0:
        inv += n1 * info
    n2 = int(round((1.0 - alpha) * n_photons))
    if alpha < 1.0 and n2 >= 1:
        var_p = float(centroid_error_variance(n1, theta_u, kind))
        vb = _bspade_mse_u(theta_u, n2, var_p + sigma_s_u**2, kind)
        if vb > 0:
            inv += 1.0 / vb
        else:
            return 0.0
    return math.inf if inv == 0 else 1.0 / inv


ALPHA_GRID = np.round(np.arange(0, 101) * 0.01, 2)


def optimal_alpha(theta: float, n_photons: float, sigma_s: float, kind: str,
                  sys: ImagingSystem = ImagingSystem()) -> float:
    """Allocation ratio minimizing :func:`two_stage_variance`.

    Grid scan in steps of 0.01 then golden-section refinement between the
    neighbours of the best grid point. Returns exactly 1 when the
    all-direct endpoint is optimal on the grid.
    """
    check_kind(kind)
    s = sys.sigma
    args = (theta / s, float(n_photons), sigma_s / s, kind)
    var = np.array([_two_stage_variance_u(float(a), *args) for a in ALPHA_GRID])
    i = int(np.argmin(var))
    if var[-1] <= var.min():
        return 1.0
    lo, hi = ALPHA_GRID[max(i - 1, 0)], ALPHA_GRID[min(i + 1, ALPHA_GRID.size - 1)]
    a, neg = golden_section_max(lambda a: -_two_stage_variance_u(float(a), *args), lo, hi, 1e-3)
    return float(a) if -neg < var[i] else float(ALPHA_GRID[i])


# The grid starts above zero: at theta = 0 the mean squared error of a
# non-negative estimator favours starving the sorter, which is not the
# small-separation behaviour wanted for switching. Interpolation holds the
# first value below 0.05 sigma.
DEFAULT_ALPHA_THETAS = np.unique(np.concatenate([np.arange(0.05, 3.0, 0.05), np.arange(3.0, 4.01, 0.25)]))


@dataclass
class AlphaStarTable:
    """Precomputed optimal allocation on a theta grid, linearly interpolated.

    Outside the grid the end values are held.
    """

    thetas: np.ndarray
    alphas: np.ndarray
    n_photons: float
    sigma_s: float
    kind: str
    sigma: float = 1.0

    @classmethod
    def build(cls, n_photons, sigma_s, kind, sys: ImagingSystem = ImagingSystem(), thetas=None):
        thetas = DEFAULT_ALPHA_THETAS * sys.sigma if thetas is None else np.asarray(thetas, dtype=float)
        alphas = np.array([optimal_alpha(t, n_photons, sigma_s, kind, sys) for t in thetas])
        return cls(thetas, alphas, float(n_photons), float(sigma_s), kind, sys.sigma)

    def __call__(self, theta):
        return np.interp(theta, self.thetas, self.alphas)


@lru_cache(maxsize=64)
def alpha_star_table(n_photons: float, sigma_s: float, kind: str, sigma: float = 1.0) -> AlphaStarTable:
    """Process-wide cache of :class:`AlphaStarTable` keyed by the trial settings."""
    return AlphaStarTable.build(n_photons, sigma_s, kind, ImagingSystem(sigma))


# ---------------------------------------------------------------------------
# bound curves


@dataclass
class BoundCurve:
    thetas: np.ndarray
    values: np.ndarray
    bound_kind: str
    n_photons: float
    sigma: float = 1.0

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.thetas.shape != self.values.shape:
            raise ValueError("thetas and values must have the same length")

    @property
    def normalized(self) -> np.ndarray:
        """Variance in units of the two-point quantum limit ``4 sigma^2 / N``."""
        return self.values * self.n_photons / (4.0 * self.sigma**2)


def crb_curve(thetas, n_photons, kind, sys: ImagingSystem = ImagingSystem()) -> BoundCurve:
    vals = [crb_direct(t, n_photons, kind, sys) for t in thetas]
    return BoundCurve(thetas, vals, CRB_DIRECT, n_photons, sys.sigma)


def qcrb_curve(thetas, n_photons, sys: ImagingSystem = ImagingSystem()) -> BoundCurve:
    return BoundCurve(thetas, np.full(len(thetas), qcrb_two_point(n_photons, sys)), QCRB, n_photons, sys.sigma)


def bspade_curve(thetas, n_photons, kind, sys: ImagingSystem = ImagingSystem()) -> BoundCurve:
    """Aligned BSPADE estimator MSE with all photons in the mode sorter."""
    vals = [bspade_estimator_variance(t, int(n_photons), AlignmentPrior(0.0), kind, sys) for t in thetas]
    return BoundCurve(thetas, vals, BSPADE_EXACT, n_photons, sys.sigma)


def two_stage_curve(thetas, n_photons, sigma_s, kind, sys: ImagingSystem = ImagingSystem(),
                    alpha=None) -> BoundCurve:
    """Two-stage variance at ``alpha`` (optimal allocation when ``None``)."""
    vals = []
    for t in thetas:
        a = optimal_alpha(t, n_photons, sigma_s, kind, sys) if alpha is None else alpha
        vals.append(two_stage_variance(a, t, n_photons, sigma_s, kind, sys))
    return BoundCurve(thetas, vals, TWO_STAGE, n_photons, sys.sigma)


BOUND_COLUMNS = ["theta_over_sigma", "bound_kind", "variance", "normalized_variance"]


def export_bound_curves(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BOUND_COLUMNS)
        for c in curves:
            for t, v, nv in zip(c.thetas, c.values, c.normalized):
                writer.writerow([repr(float(t / c.sigma)), c.bound_kind, repr(float(v)), repr(float(nv))])
