"""Density, value and control fields plus their algebra."""

import dataclasses
from typing import List, Optional, Sequence

import numpy as np

from crowd_mfg.config import NEGATIVE_DENSITY_TOL
from crowd_mfg.grid import Grid
from crowd_mfg.models import InitialDensity
from crowd_mfg.utils import ConfigurationError, SchemeError


@dataclasses.dataclass
class DensityField:
    """One spatial slice of rho, people per unit area at cell centres."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise SchemeError(f"density slice must be 2-D, got shape {self.values.shape}")
        if self.values.size and self.values.min() < -NEGATIVE_DENSITY_TOL:
            raise SchemeError(f"negative density {self.values.min():.3e}")

    @classmethod
    def zeros(cls, grid: Grid) -> "DensityField":
        return cls(np.zeros(grid.shape))

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy())


@dataclasses.dataclass
class SpaceTimeDensity:
    """The (nT + 1) slices of a density over [0, T].

    ``frozen_from`` marks the first index from which every later slice is a
    copy of that one (the freezing branch of rho^theta); None if unknown.
    """
    values: np.ndarray
    frozen_from: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise SchemeError(f"space-time density must be 3-D, got shape {self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]

    def slice(self, n: int) -> DensityField:
        return DensityField(self.values[n])

    def canonical_index(self, n: int) -> int:
        """Index of the slice that n is a copy of."""
        if self.frozen_from is not None and n > self.frozen_from:
            return self.frozen_from
        return n

    @classmethod
    def from_slices(cls, slices: Sequence[DensityField], frozen_from: Optional[int] = None):
        return cls(np.stack([s.values for s in slices]), frozen_from=frozen_from)


@dataclasses.dataclass
class ValueField:
    """phi over space-time; wall cells hold the finite stand-in for +inf."""
    values: np.ndarray
    wall_value: float


@dataclasses.dataclass
class ControlField:
    """Optimal control as 1-based indices into {a_1, ..., a_K}."""
    indices: np.ndarray
    K: int

    def slice(self, n: int) -> np.ndarray:
        return self.indices[n]


def cell_average_init(rho0: InitialDensity, g: Grid) -> DensityField:
    """Uniform density over the cells whose centres fall in each region.

    Each region is scaled so that its cells carry exactly the region's mass.
    """
    X1, X2 = g.mesh()
    tol1 = 1e-9 * g.dx1
    tol2 = 1e-9 * g.dx2
    values = np.zeros(g.shape)
    for k, region in enumerate(rho0.regions):
        inside = (
            (X1 >= region.x1[0] - tol1)
            & (X1 <= region.x1[1] + tol1)
            & (X2 >= region.x2[0] - tol2)
            & (X2 <= region.x2[1] + tol2)
        )
        count = int(inside.sum())
        if count == 0:
            raise ConfigurationError(f"rho0.regions[{k}] contains no cell centre")
        values[inside] += region.mass / (count * g.cell_area)
    return DensityField(values)


def total_mass(d: DensityField, g: Grid) -> float:
    return float(d.values.sum() * g.cell_area)


def _time_weights(n_slices: int, dt: float) -> np.ndarray:
    # trapezoidal rule in time
    w = np.full(n_slices, dt)
    if n_slices > 1:
        w[0] = w[-1] = 0.5 * dt
    return w


def l1_distance(a: SpaceTimeDensity, b: SpaceTimeDensity, g: Grid) -> float:
    """Discrete L1(Omega x [0, T]) norm of a - b."""
    if a.values.shape != b.values.shape:
        raise SchemeError(f"shape mismatch {a.values.shape} vs {b.values.shape}")
    per_slice = np.abs(a.values - b.values).sum(axis=(1, 2)) * g.cell_area
    return float(np.dot(per_slice, _time_weights(len(a), g.dt)))


class FictitiousPlay:
    """Running uniform average of density iterates."""

    def __init__(self):
        self.count = 0
        self.average: Optional[SpaceTimeDensity] = None

    def update(self, rho: SpaceTimeDensity) -> SpaceTimeDensity:
        self.count += 1
        if self.average is None:
            self.average = SpaceTimeDensity(rho.values.copy(), rho.frozen_from)
        else:
            k = self.count
            values = ((k - 1) * self.average.values + rho.values) / k
            frozen = _common_frozen(self.average.frozen_from, rho.frozen_from)
            self.average = SpaceTimeDensity(values, frozen)
        return self.average


def _common_frozen(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None or b is None:
        return None
    return max(a, b)


def fictitious_play_average(history: List[SpaceTimeDensity]) -> SpaceTimeDensity:
    """Uniform average (1/k) sum_j rho_(j), computed incrementally."""
    if not history:
        raise SchemeError("fictitious play needs at least one iterate")
    fp = FictitiousPlay()
    for rho in history:
        fp.update(rho)
    return fp.average
