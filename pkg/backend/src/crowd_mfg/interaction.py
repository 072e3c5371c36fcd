"""Nonlocal repulsion over the sensory half-annulus and wall projection.

The sensory region of a pedestrian at y heading along a is
``{zeta : r0 <= |zeta - y| <= r, (zeta - y) . a > 0}``; on the grid a cell
belongs to it when its centre does.
"""

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from crowd_mfg.config import STENCIL_RADIUS_SLACK
from crowd_mfg.grid import Grid
from crowd_mfg.utils import ConfigurationError


@dataclasses.dataclass(frozen=True)
class InteractionParams:
    c_rep: float
    r0: float
    r: float

    def __post_init__(self):
        if self.c_rep < 0:
            raise ConfigurationError(f"model.c_rep must be >= 0, got {self.c_rep}")
        if not 0 <= self.r0 < self.r:
            raise ConfigurationError(f"need 0 <= r0 < r, got r0={self.r0}, r={self.r}")


@dataclasses.dataclass(frozen=True)
class SensoryStencil:
    """Cells seen ahead of one direction, with their kernel vectors.

    ``weights[m] = -(zeta - y) / |zeta - y|^2 * dx1 * dx2`` for offset m;
    multiplying by c_rep and the neighbour density gives its V_INT share.
    """
    direction: Tuple[float, float]
    offsets: Tuple[Tuple[int, int], ...]
    weights: np.ndarray  # (m, 2)
    kernel1: np.ndarray  # correlation kernels, centre at (h1, h2)
    kernel2: np.ndarray

    @property
    def is_empty(self) -> bool:
        return len(self.offsets) == 0

    @property
    def abs_weight(self) -> float:
        """Sum of |w| over the stencil."""
        if self.is_empty:
            return 0.0
        return float(np.hypot(self.weights[:, 0], self.weights[:, 1]).sum())


@dataclasses.dataclass(frozen=True)
class Openings:
    """Boundary cells through which mass may leave, one mask per side."""
    bottom: np.ndarray  # (n1,) at j = 0
    top: np.ndarray  # (n1,) at j = n2 - 1
    left: np.ndarray  # (n2,) at i = 0
    right: np.ndarray  # (n2,) at i = n1 - 1

    @classmethod
    def closed(cls, grid: Grid) -> "Openings":
        return cls(
            bottom=np.zeros(grid.n1, dtype=bool),
            top=np.zeros(grid.n1, dtype=bool),
            left=np.zeros(grid.n2, dtype=bool),
            right=np.zeros(grid.n2, dtype=bool),
        )

    def cells(self, grid: Grid) -> np.ndarray:
        mask = np.zeros(grid.shape, dtype=bool)
        mask[:, 0] |= self.bottom
        mask[:, -1] |= self.top
        mask[0, :] |= self.left
        mask[-1, :] |= self.right
        return mask

    def union(self, other: "Openings") -> "Openings":
        return Openings(
            bottom=self.bottom | other.bottom,
            top=self.top | other.top,
            left=self.left | other.left,
            right=self.right | other.right,
        )

    def any(self) -> bool:
        return bool(self.bottom.any() or self.top.any() or self.left.any() or self.right.any())


def build_stencils(g: Grid, params: InteractionParams, controls: np.ndarray) -> List[SensoryStencil]:
    """One stencil per control direction; cells selected by their centre."""
    h1 = max(int(math.ceil(params.r / g.dx1)), 1)
    h2 = max(int(math.ceil(params.r / g.dx2)), 1)
    lo = params.r0 * (1.0 - STENCIL_RADIUS_SLACK)
    hi = params.r * (1.0 + STENCIL_RADIUS_SLACK)

    stencils = []
    for a in np.asarray(controls, dtype=float):
        offsets = []
        weights = []
        kernel1 = np.zeros((2 * h1 + 1, 2 * h2 + 1))
        kernel2 = np.zeros((2 * h1 + 1, 2 * h2 + 1))
        for di in range(-h1, h1 + 1):
            for dj in range(-h2, h2 + 1):
                d1 = di * g.dx1
                d2 = dj * g.dx2
                dist = math.hypot(d1, d2)
                if dist == 0.0 or dist < lo or dist > hi:
                    continue
                # strict half-plane, with slack for directions like cos(pi/2)
                if d1 * a[0] + d2 * a[1] <= 1e-12 * dist:
                    continue
                w = (-d1 / dist**2 * g.cell_area, -d2 / dist**2 * g.cell_area)
                offsets.append((di, dj))
                weights.append(w)
                kernel1[di + h1, dj + h2] = w[0]
                kernel2[di + h1, dj + h2] = w[1]
        stencils.append(
            SensoryStencil(
                direction=(float(a[0]), float(a[1])),
                offsets=tuple(offsets),
                weights=np.array(weights, dtype=float).reshape(-1, 2),
                kernel1=kernel1,
                kernel2=kernel2,
            )
        )
    return stencils


def interaction_velocity(
    rho,
    i: int,
    j: int,
    k: int,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
) -> np.ndarray:
    """Midpoint-rule V_INT at cell (i, j) for control index k (1-based)."""
    values = getattr(rho, "values", rho)
    n1, n2 = values.shape
    stencil = stencils[k - 1]
    v = np.zeros(2)
    if params.c_rep == 0.0:
        return v
    for (di, dj), w in zip(stencil.offsets, stencil.weights):
        r, s = i + di, j + dj
        if 0 <= r < n1 and 0 <= s < n2:
            v += w * values[r, s]
    return params.c_rep * v


def interaction_fields(
    rho: np.ndarray,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """V_INT on the whole grid for each control index (1-based).

    Returns an array of shape (len(indices), 2, n1, n2).
    """
    if indices is None:
        indices = range(1, len(stencils) + 1)
    indices = list(indices)
    out = np.zeros((len(indices), 2) + rho.shape)
    if params.c_rep == 0.0 or not rho.any():
        return out
    for m, k in enumerate(indices):
        stencil = stencils[k - 1]
        if stencil.is_empty:
            continue
        out[m, 0] = ndimage.correlate(rho, stencil.kernel1, mode="constant", cval=0.0)
        out[m, 1] = ndimage.correlate(rho, stencil.kernel2, mode="constant", cval=0.0)
    out *= params.c_rep
    return out


def total_velocity(a, v_int) -> np.ndarray:
    return np.asarray(a, dtype=float) + np.asarray(v_int, dtype=float)


def project_boundary_velocity(
    v,
    i: int,
    j: int,
    g: Grid,
    openings: Optional[Openings] = None,
) -> np.ndarray:
    """Zero the outward component of v on boundary cells, except through exits."""
    v = np.array(v, dtype=float)
    if openings is None:
        openings = Openings.closed(g)
    if i == 0 and v[0] < 0 and not openings.left[j]:
        v[0] = 0.0
    if i == g.n1 - 1 and v[0] > 0 and not openings.right[j]:
        v[0] = 0.0
    if j == 0 and v[1] < 0 and not openings.bottom[i]:
        v[1] = 0.0
    if j == g.n2 - 1 and v[1] > 0 and not openings.top[i]:
        v[1] = 0.0
    return v


def project_velocity_field(
    v1: np.ndarray,
    v2: np.ndarray,
    g: Grid,
    openings: Optional[Openings] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised project_boundary_velocity over (..., n1, n2) arrays."""
    if openings is None:
        openings = Openings.closed(g)
    v1 = np.array(v1, dtype=float)
    v2 = np.array(v2, dtype=float)

    left = v1[..., 0, :]
    left[(left < 0) & ~openings.left] = 0.0
    right = v1[..., -1, :]
    right[(right > 0) & ~openings.right] = 0.0
    bottom = v2[..., :, 0]
    bottom[(bottom < 0) & ~openings.bottom] = 0.0
    top = v2[..., :, -1]
    top[(top > 0) & ~openings.top] = 0.0
    return v1, v2


def candidate_velocities(
    rho: np.ndarray,
    controls: np.ndarray,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
    g: Grid,
    openings: Optional[Openings] = None,
    v_int: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Projected V(x; a_k, rho) for every k, each of shape (K, n1, n2)."""
    if v_int is None:
        v_int = interaction_fields(rho, stencils, params)
    controls = np.asarray(controls, dtype=float)
    v1 = controls[:, 0, None, None] + v_int[:, 0]
    v2 = controls[:, 1, None, None] + v_int[:, 1]
    return project_velocity_field(v1, v2, g, openings)


def velocity_field(
    rho: np.ndarray,
    alpha: np.ndarray,
    controls: np.ndarray,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
    g: Grid,
    openings: Optional[Openings] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Projected V(cell; alpha_cell, rho) for a synthesized control slice."""
    controls = np.asarray(controls, dtype=float)
    alpha = np.asarray(alpha)
    v1 = controls[alpha - 1, 0]
    v2 = controls[alpha - 1, 1]
    occupied = rho > 0
    if params.c_rep > 0.0 and occupied.any():
        present = np.unique(alpha[occupied])
        fields = interaction_fields(rho, stencils, params, indices=present)
        for m, k in enumerate(present):
            sel = alpha == k
            v1[sel] += fields[m, 0][sel]
            v2[sel] += fields[m, 1][sel]
    return project_velocity_field(v1, v2, g, openings)


def velocity_bound(stencils: Sequence[SensoryStencil], params: InteractionParams, rho_max: float) -> float:
    """A-priori bound on |V| for densities bounded by rho_max (|a| = 1)."""
    if not stencils:
        return 1.0
    worst = max(s.abs_weight for s in stencils)
    return 1.0 + params.c_rep * rho_max * worst
