"""Gaussian neutron-source input functions.

A source is a mono-energetic, axis-aligned Gaussian energy-density distribution
in space.  Axes with zero standard deviation are degenerate: particles are born
exactly at the mean on that axis and the axis is excluded from the density
product (the distribution carries a delta factor there instead of a Gaussian).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Paper-scale defaults for the random source ensemble.
DEFAULT_ENERGY_RANGE = (0.0, 1.0)   # MeV, open interval
DEFAULT_MU_Y_RANGE = (-9.0, 9.0)    # cm
DEFAULT_SIGMA = (1.0, 1.0, 0.0)     # cm; z axis degenerate

DEFAULT_SENSOR_COUNT = 190


@dataclass(frozen=True)
class SourceSpec:
    """One input function: mono-energetic Gaussian source u(E, x).

    Attributes
    ----------
    energy_mev : float
        Neutron energy in MeV.  Scales the energy density multiplicatively.
    mu : tuple of 3 floats
        Mean position (cm).
    sigma : tuple of 3 floats
        Per-axis standard deviation (cm).  A zero component marks a
        degenerate (delta) axis.
    """

    energy_mev: float
    mu: tuple = (0.0, 0.0, 0.0)
    sigma: tuple = DEFAULT_SIGMA

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        object.__setattr__(self, "sigma", tuple(float(v) for v in self.sigma))
        object.__setattr__(self, "energy_mev", float(self.energy_mev))
        if len(self.mu) != 3 or len(self.sigma) != 3:
            raise ConfigurationError("mu and sigma must be 3-vectors")
        if self.energy_mev < 0:
            raise ConfigurationError(f"energy_mev must be >= 0, got {self.energy_mev}")
        if any(s < 0 for s in self.sigma):
            raise ConfigurationError(f"sigma components must be >= 0, got {self.sigma}")

    def content_id(self) -> str:
        """Short stable identifier derived from the spec's values."""
        payload = repr((self.energy_mev, self.mu, self.sigma)).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


@dataclass(frozen=True)
class CovarianceMatrix:
    """Diagonal covariance of the source distribution; off-diagonals are zero."""

    diagonal: tuple

    def as_matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.diagonal, dtype=float))


def make_covariance(sigma) -> CovarianceMatrix:
    """Build the diagonal covariance matrix with entries sigma[j]**2."""
    sigma = tuple(float(s) for s in sigma)
    if len(sigma) != 3:
        raise ConfigurationError("sigma must be a 3-vector")
    if any(s < 0 for s in sigma):
        raise ConfigurationError(f"sigma components must be >= 0, got {sigma}")
    return CovarianceMatrix(diagonal=tuple(s * s for s in sigma))


@dataclass(frozen=True)
class SensorGrid:
    """Evenly spaced sensor line along one coordinate axis, endpoints included."""

    axis: str = "y"
    count: int = DEFAULT_SENSOR_COUNT
    lo: float = -9.0
    hi: float = 9.0

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ConfigurationError(f"sensor axis must be 'x' or 'y', got {self.axis!r}")
        if self.count < 2:
            raise ConfigurationError(f"sensor count must be >= 2, got {self.count}")
        if not self.hi > self.lo:
            raise ConfigurationError(f"sensor range is empty: [{self.lo}, {self.hi}]")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def positions(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass
class SensorVector:
    """Source energy-density samples at the sensor positions of one function."""

    values: np.ndarray
    spec_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


# ----------------------------------------------------------------------
# Density evaluation
# ----------------------------------------------------------------------

def gaussian_density(x, spec: SourceSpec) -> float:
    """Evaluate the source's spatial density at a 3-vector x.

    The product runs over non-degenerate axes only:

        prod_j (2 pi sigma_j^2)^(-1/2) exp(-(x_j - mu_j)^2 / (2 sigma_j^2))

    Degenerate axes (sigma_j = 0) contribute a delta constraint handled by the
    birth sampler, not a density factor.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ConfigurationError(f"x must be a 3-vector, got shape {x.shape}")
    out = 1.0
    for j in range(3):
        s = spec.sigma[j]
        if s == 0.0:
            continue
        d = x[j] - spec.mu[j]
        out *= math.exp(-0.5 * (d / s) ** 2) / math.sqrt(2.0 * math.pi * s * s)
    return out


def source_intensity(x, spec: SourceSpec) -> float:
    """Energy density of the source at x: energy_mev times the spatial density."""
    return spec.energy_mev * gaussian_density(x, spec)


# ----------------------------------------------------------------------
# Sampling and discretization
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SourceRanges:
    """Sampling ranges for the random source ensemble."""

    energy: tuple = DEFAULT_ENERGY_RANGE
    mu_y: tuple = DEFAULT_MU_Y_RANGE
    sigma: tuple = DEFAULT_SIGMA

    def __post_init__(self):
        for name, (lo, hi) in (("energy", self.energy), ("mu_y", self.mu_y)):
            if not hi > lo:
                raise ConfigurationError(f"{name} range is empty or inverted: ({lo}, {hi})")


def sample_source_spec(rng: np.random.Generator, ranges: SourceRanges | None = None) -> SourceSpec:
    """Draw one random SourceSpec: E and mu_y uniform, everything else fixed.

    Energy is drawn from the open interval (lo, hi); mu_x and mu_z stay at 0.
    Deterministic given the generator state.
    """
    ranges = ranges or SourceRanges()
    e_lo, e_hi = ranges.energy
    energy = e_lo + (e_hi - e_lo) * rng.random()
    while energy == e_lo:  # open lower endpoint; zero-measure redraw
        energy = e_lo + (e_hi - e_lo) * rng.random()
    m_lo, m_hi = ranges.mu_y
    mu_y = m_lo + (m_hi - m_lo) * rng.random()
    return SourceSpec(energy_mev=energy, mu=(0.0, mu_y, 0.0), sigma=ranges.sigma)


def discretize_source(spec: SourceSpec, grid: SensorGrid, spec_id: str | None = None) -> SensorVector:
    """Sample the source energy density at the sensor positions.

    Sensors run along `grid.axis`; the off-axis coordinates are fixed at the
    spec's mean for those axes, so the samples trace the on-axis profile
    through the distribution's center.
    """
    positions = grid.positions()
    point = np.array(spec.mu, dtype=float)
    axis_index = 0 if grid.axis == "x" else 1
    values = np.empty(grid.count, dtype=np.float64)
    for i, p in enumerate(positions):
        point[axis_index] = p
        values[i] = source_intensity(point, spec)
    return SensorVector(values=values, spec_id=spec_id or spec.content_id())
