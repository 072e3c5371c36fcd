"""Uniform space-time discretization of Omega x [0, T].

Fields live at cell-centre nodes: node (i, j) sits at
``origin + ((i + 1/2) dx1, (j + 1/2) dx2)`` with ``i in [0, n1 - 1]``.
"""

import dataclasses
import math
from typing import Tuple

import numpy as np

from crowd_mfg.config import CFL_SLACK
from crowd_mfg.utils import ConfigurationError, SchemeError


@dataclasses.dataclass(frozen=True)
class Grid:
    n1: int
    n2: int
    dx1: float
    dx2: float
    dt: float
    nT: int
    T: float
    origin: Tuple[float, float] = (0.0, 0.0)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def cell_area(self) -> float:
        return self.dx1 * self.dx2

    @property
    def size(self) -> Tuple[float, float]:
        return (self.n1 * self.dx1, self.n2 * self.dx2)

    @property
    def x1(self) -> np.ndarray:
        """Cell-centre abscissae."""
        return self.origin[0] + (np.arange(self.n1) + 0.5) * self.dx1

    @property
    def x2(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.n2) + 0.5) * self.dx2

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two (n1, n2) arrays."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def center(self, i: int, j: int) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + (i + 0.5) * self.dx1,
                self.origin[1] + (j + 0.5) * self.dx2,
            ]
        )

    def time(self, n: int) -> float:
        return n * self.dt

    def step_index(self, t: float) -> int:
        """Nearest time index to t, clipped to [0, nT]."""
        return int(min(max(round(t / self.dt), 0), self.nT))

    def steps(self, duration: float) -> int:
        """Number of whole time steps covering a duration."""
        return int(round(duration / self.dt))

    def boundary_mask(self) -> np.ndarray:
        """The ring of cells touching the domain boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def node_hull(self) -> Tuple[float, float, float, float]:
        x1, x2 = self.x1, self.x2
        return (x1[0], x1[-1], x2[0], x2[-1])

    def clamp(self, p1, p2):
        """Clamp query points into the hull of the cell-centre nodes."""
        lo1, hi1, lo2, hi2 = self.node_hull()
        return np.clip(p1, lo1, hi1), np.clip(p2, lo2, hi2)


def build_grid(
    domain_size: Tuple[float, float],
    n1: int,
    n2: int,
    T: float,
    nT: int,
    origin: Tuple[float, float] = (0.0, 0.0),
) -> Grid:
    """Build the grid, dx = size / n per axis and dt = T / nT."""
    for name, value in (("n1", n1), ("n2", n2), ("nT", nT)):
        if int(value) != value or value < 1:
            raise ConfigurationError(f"grid.{name} must be a positive integer, got {value}")
    for name, value in (("size[0]", domain_size[0]), ("size[1]", domain_size[1]), ("T", T)):
        if not value > 0 or not math.isfinite(value):
            raise ConfigurationError(f"grid.{name} must be positive, got {value}")

    return Grid(
        n1=int(n1),
        n2=int(n2),
        dx1=domain_size[0] / n1,
        dx2=domain_size[1] / n2,
        dt=T / nT,
        nT=int(nT),
        T=float(T),
        origin=(float(origin[0]), float(origin[1])),
    )


def _cell_and_fraction(p, lo: float, h: float, n: int):
    s = (np.asarray(p, dtype=float) - lo) / h
    idx = np.clip(np.floor(s).astype(np.int64), 0, max(n - 2, 0))
    frac = s - idx
    if n == 1:
        frac = np.zeros_like(frac)
    return idx, frac


def interpolate_many(values: np.ndarray, p1, p2, grid: Grid) -> np.ndarray:
    """Vectorised bilinear interpolation of a (n1, n2) node field.

    Query points must already be inside the node hull (see ``Grid.clamp``).
    """
    lo1, hi1, lo2, hi2 = grid.node_hull()
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    tol1 = 1e-9 * grid.dx1
    tol2 = 1e-9 * grid.dx2
    if (
        np.any(p1 < lo1 - tol1)
        or np.any(p1 > hi1 + tol1)
        or np.any(p2 < lo2 - tol2)
        or np.any(p2 > hi2 + tol2)
    ):
        raise SchemeError("interpolation query outside the node hull")

    i, f1 = _cell_and_fraction(p1, lo1, grid.dx1, grid.n1)
    j, f2 = _cell_and_fraction(p2, lo2, grid.dx2, grid.n2)
    i1 = np.minimum(i + 1, grid.n1 - 1)
    j1 = np.minimum(j + 1, grid.n2 - 1)

    v00 = values[i, j]
    v10 = values[i1, j]
    v01 = values[i, j1]
    v11 = values[i1, j1]
    # increment form: constant fields come back exactly
    return v00 + f1 * (v10 - v00) + f2 * (v01 - v00) + f1 * f2 * (v11 - v10 - v01 + v00)


def bilinear_interpolate(values: np.ndarray, p, grid: Grid) -> float:
    """Value at point p from the four surrounding nodes."""
    return float(interpolate_many(values, p[0], p[1], grid))


@dataclasses.dataclass(frozen=True)
class CFLReport:
    passed: bool
    ratio: float  # dt * vmax / min(dx1, dx2)
    vmax: float

    @property
    def margin(self) -> float:
        return 1.0 - self.ratio


def check_cfl(grid: Grid, vmax: float) -> CFLReport:
    """Report whether dt * vmax <= min(dx1, dx2)."""
    ratio = grid.dt * vmax / min(grid.dx1, grid.dx2)
    return CFLReport(passed=ratio <= 1.0 + CFL_SLACK, ratio=ratio, vmax=vmax)
