"""Probability models for a 1D Gaussian-apodized imaging system.

All transverse lengths are handled in units of the PSF width ``sigma``
internally; public functions accept and return physical lengths.

Two object kinds are supported:

``"two-point"``
    two identical incoherent point sources separated by ``theta``.
``"line"``
    a uniform incoherent segment of length ``theta``.

Coordinates passed to the densities are measured from the mode-sorter axis,
so the object centroid appears as the misalignment ``xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

TWO_POINT = "two-point"
LINE = "line"
KINDS = (TWO_POINT, LINE)

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# Below this length ratio a segment is indistinguishable from a point source.
_LINE_THETA_EPS = 1e-7


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown object kind {kind!r}; expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class ImagingSystem:
    """Gaussian-apodized 1D imaging system characterized by its PSF width."""

    sigma: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @classmethod
    def from_numerical_aperture(cls, wavelength: float, na: float) -> "ImagingSystem":
        return cls(wavelength / (2.0 * math.pi * na))

    @classmethod
    def from_aperture_diameter(cls, wavelength: float, diameter: float) -> "ImagingSystem":
        """Angular PSF width for a distant object, ``sigma ~ lambda / D``."""
        return cls(wavelength / diameter)


@dataclass(frozen=True)
class ObjectModel:
    kind: str
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        check_kind(self.kind)
        if not self.theta >= 0:
            raise ValueError(f"theta must be non-negative, got {self.theta}")

    def second_moment(self) -> float:
        """Second central moment of the radiant exitance profile."""
        if self.kind == TWO_POINT:
            return self.theta**2 / 4.0
        return self.theta**2 / 12.0


@dataclass(frozen=True)
class MisalignmentState:
    """Total misalignment split into centroid-estimate error and pointing error."""

    xi_p: float
    xi_s: float

    @property
    def xi(self) -> float:
        return self.xi_p + self.xi_s


def psf_intensity(x, sys: ImagingSystem = ImagingSystem()):
    """Intensity PSF ``|psi(x)|^2``, a unit-area Gaussian of width sigma."""
    u = np.asarray(x, dtype=float) / sys.sigma
    return _INV_SQRT_2PI / sys.sigma * np.exp(-0.5 * u * u)


def psf_amplitude(x, sys: ImagingSystem = ImagingSystem()):
    """Coherent PSF ``psi(x)`` of the Gaussian aperture."""
    u = np.asarray(x, dtype=float) / sys.sigma
    return (2.0 * math.pi * sys.sigma**2) ** -0.25 * np.exp(-0.25 * u * u)


def q_factor(xi, theta, sys: ImagingSystem = ImagingSystem()):
    return (np.asarray(xi, dtype=float) - 0.5 * np.asarray(theta, dtype=float)) ** 2 / (
        4.0 * sys.sigma**2
    )


def _direct_density_u(u, xi_u, theta_u, kind):
    """Image-plane density in sigma units (unit sigma)."""
    d = u - xi_u
    if kind == TWO_POINT:
        h = 0.5 * theta_u
        return 0.5 * _INV_SQRT_2PI * (np.exp(-0.5 * (d - h) ** 2) + np.exp(-0.5 * (d + h) ** 2))
    theta_u = np.asarray(theta_u, dtype=float)
    small = np.abs(theta_u) < _LINE_THETA_EPS
    if np.all(small):
        return _INV_SQRT_2PI * np.exp(-0.5 * d * d)
    t = np.where(small, 1.0, theta_u)
    h = 0.5 * t
    # erfc on the far tail keeps relative precision where both erf terms round to 1
    a = (d + h) / _SQRT2
    b = (d - h) / _SQRT2
    diff = np.where(
        b > 0,
        special.erfc(b) - special.erfc(a),
        np.where(a < 0, special.erfc(-a) - special.erfc(-b), special.erf(a) - special.erf(b)),
    )
    val = diff / (2.0 * t)
    if np.any(small):
        val = np.where(small, _INV_SQRT_2PI * np.exp(-0.5 * d * d), val)
    return val


def direct_density(x, xi, obj: ObjectModel, sys: ImagingSystem = ImagingSystem()):
    """Single-photon arrival density for direct detection.

    ``x`` and ``xi`` are measured from the sorter axis; the density is the
    object profile centred at ``xi`` convolved with the intensity PSF.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(xi)):
        raise ValueError("direct_density requires finite x and xi")
    s = sys.sigma
    return _direct_density_u(x / s, np.asarray(xi) / s, obj.theta / s, obj.kind) / s


def _bspade_prob_u(xi_u, theta_u, kind):
    xi_u = np.asarray(xi_u, dtype=float)
    theta_u = np.asarray(theta_u, dtype=float)
    if kind == TWO_POINT:
        h = 0.5 * theta_u
        return 0.5 * (np.exp(-0.25 * (xi_u - h) ** 2) + np.exp(-0.25 * (xi_u + h) ** 2))
    small = np.abs(theta_u) < _LINE_THETA_EPS
    t = np.where(small, 1.0, theta_u)
    h = 0.5 * t
    a = 0.5 * (xi_u + h)
    b = 0.5 * (xi_u - h)
    diff = np.where(
        b > 0,
        special.erfc(b) - special.erfc(a),
        np.where(a < 0, special.erfc(-a) - special.erfc(-b), special.erf(a) - special.erf(b)),
    )
    val = _SQRT_PI / t * diff
    return np.where(small, np.exp(-0.25 * xi_u**2), val)


def bspade_prob(xi, obj: ObjectModel, sys: ImagingSystem = ImagingSystem()):
    """Probability that a photon lands in the PSF-matched target mode.

    Uses the signed-argument erf form for the line object so that the
    aligned, vanishing-length limit returns 1.
    """
    s = sys.sigma
    out = _bspade_prob_u(np.asarray(xi, dtype=float) / s, obj.theta / s, obj.kind)
    return out if np.ndim(out) else float(out)


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved error estimate {achieved:.3g})")
        self.achieved = achieved


def _quad(f, a, b, tol, **kw):
    val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=200, **kw)
    if not math.isfinite(val) or err > 100 * max(tol, tol * abs(val)):
        raise QuadratureError("quadrature did not converge", err)
    return val


def psf_autocorrelation_numeric(x: float, sys: ImagingSystem = ImagingSystem(), tol=1e-13):
    """``Gamma(x) = int psi(s - x) psi(s) ds`` evaluated by adaptive quadrature."""
    s = sys.sigma
    f = lambda t: float(psf_amplitude(t - x, sys) * psf_amplitude(t, sys))
    lo, hi = min(0.0, x) - 20 * s, max(0.0, x) + 20 * s
    return _quad(f, lo, hi, tol, points=[min(0.0, x), max(0.0, x)] if x != 0 else [0.0])


def bspade_prob_numeric_oracle(xi: float, obj: ObjectModel, sys: ImagingSystem = ImagingSystem(),
                               tol=1e-13) -> float:
    """Target-mode probability by brute-force quadrature of the mode projection.

    The PSF autocorrelation is itself computed numerically from the coherent
    PSF, then squared and integrated against the object profile.
    """
    gamma2 = lambda x: psf_autocorrelation_numeric(x, sys, tol) ** 2
    if obj.kind == TWO_POINT:
        h = 0.5 * obj.theta
        return 0.5 * (gamma2(xi - h) + gamma2(xi + h))
    if obj.theta == 0:
        return gamma2(xi)
    h = 0.5 * obj.theta
    return _quad(gamma2, xi - h, xi + h, tol) / obj.theta
