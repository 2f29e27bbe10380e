"""Seedable photon-counting samplers.

Every stochastic draw comes from a :class:`RandomStream`, identified by a
64-bit seed plus a tuple of integer keys (trial index, substream label).
Streams with different keys are derived through ``numpy.random.SeedSequence``
spawn keys, so they never share generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import TWO_POINT, ImagingSystem, ObjectModel

# substream labels; fixed integers so the mapping never depends on ordering
STAGE1 = 1
SYSTEMATIC = 2
STAGE2 = 3


class RandomStream:
    """Deterministic generator bound to ``(seed, *key)``."""

    def __init__(self, seed: int, *key: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    @property
    def stream_id(self):
        return self.key[0] if self.key else 0

    def child(self, *key: int) -> "RandomStream":
        """Independent stream nested under this one."""
        return RandomStream(self.seed, *self.key, *key)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"


@dataclass
class Stage1Record:
    """Direct-detection arrival positions, measured from the sorter axis."""

    positions: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1)

    @property
    def n1(self) -> int:
        return self.positions.size

    def shifted(self, delta: float) -> "Stage1Record":
        return Stage1Record(self.positions + delta)


@dataclass(frozen=True)
class Stage2Record:
    """Binary mode-sorter counts: ``k`` of ``n2`` photons in the target mode."""

    k: int = 0
    n2: int = 0

    def __post_init__(self):
        if not 0 <= self.k <= self.n2:
            raise ValueError(f"need 0 <= k <= n2, got k={self.k}, n2={self.n2}")

    @property
    def fraction(self) -> float:
        return self.k / self.n2


def sample_poisson_count(mean: float, rng: RandomStream) -> int:
    if not mean >= 0:
        raise ValueError(f"Poisson mean must be non-negative, got {mean}")
    if mean == 0:
        return 0
    return int(rng.generator.poisson(mean))


def sample_positions(n: int, xi: float, obj: ObjectModel, sys: ImagingSystem,
                     rng: RandomStream) -> Stage1Record:
    """Draw ``n`` arrival positions for an object centred at ``xi``.

    Source offset (which emitter, or where along the segment) plus Gaussian
    PSF blur; exact for both object kinds.
    """
    if n < 0:
        raise ValueError("photon count must be non-negative")
    g = rng.generator
    if obj.kind == TWO_POINT:
        offsets = (g.integers(0, 2, size=n) - 0.5) * obj.theta
    else:
        offsets = g.uniform(-0.5, 0.5, size=n) * obj.theta
    blur = g.normal(0.0, sys.sigma, size=n)
    return Stage1Record(xi + offsets + blur)


def sample_systematic_misalignment(sigma_s: float, rng: RandomStream) -> float:
    if not sigma_s >= 0:
        raise ValueError("sigma_s must be non-negative")
    if sigma_s == 0:
        return 0.0
    return float(rng.generator.normal(0.0, sigma_s))


def sample_bspade(n2: int, g: float, rng: RandomStream) -> Stage2Record:
    if not 0.0 <= g <= 1.0:
        raise ValueError(f"target-mode probability must lie in [0, 1], got {g}")
    if n2 == 0:
        return Stage2Record(0, 0)
    return Stage2Record(int(rng.generator.binomial(n2, g)), int(n2))
