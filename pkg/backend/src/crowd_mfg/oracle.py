"""Slow reference solvers for small grids.

Nothing here calls the production interpolation, sweep or minimum search:
the recursions are written out with plain loops.
"""

import dataclasses
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from crowd_mfg.config import ORACLE_MAX_CELLS, ORACLE_MAX_STEPS
from crowd_mfg.utils import ConfigurationError

# (i, j, n, k) -> projected velocity (v1, v2) of control k (1-based) at time n
VelocityOracle = Callable[[int, int, int, int], Tuple[float, float]]


@dataclasses.dataclass(frozen=True)
class OracleGrid:
    n1: int
    n2: int
    dx1: float
    dx2: float
    dt: float
    nT: int

    def __post_init__(self):
        if self.n1 > ORACLE_MAX_CELLS or self.n2 > ORACLE_MAX_CELLS:
            raise ConfigurationError(
                f"oracle grid {self.n1}x{self.n2} exceeds {ORACLE_MAX_CELLS}x{ORACLE_MAX_CELLS}"
            )
        if self.nT > ORACLE_MAX_STEPS:
            raise ConfigurationError(f"oracle nT={self.nT} exceeds {ORACLE_MAX_STEPS}")
        if min(self.n1, self.n2, self.nT) < 1:
            raise ConfigurationError("oracle grid counts must be positive")

    @classmethod
    def from_grid(cls, g) -> "OracleGrid":
        return cls(n1=g.n1, n2=g.n2, dx1=g.dx1, dx2=g.dx2, dt=g.dt, nT=g.nT)

    def centre(self, i: int, j: int) -> Tuple[float, float]:
        return ((i + 0.5) * self.dx1, (j + 0.5) * self.dx2)


def _lookup(table: List[List[float]], og: OracleGrid, x: float, y: float) -> float:
    # clamp into the node hull, then locate the lower-left node
    x = min(max(x, 0.5 * og.dx1), (og.n1 - 0.5) * og.dx1)
    y = min(max(y, 0.5 * og.dx2), (og.n2 - 0.5) * og.dx2)
    u = (x - 0.5 * og.dx1) / og.dx1
    v = (y - 0.5 * og.dx2) / og.dx2
    i = min(int(math.floor(u)), max(og.n1 - 2, 0))
    j = min(int(math.floor(v)), max(og.n2 - 2, 0))
    fu = u - i if og.n1 > 1 else 0.0
    fv = v - j if og.n2 > 1 else 0.0
    ip = min(i + 1, og.n1 - 1)
    jp = min(j + 1, og.n2 - 1)
    a = table[i][j]
    b = table[ip][j]
    c = table[i][jp]
    d = table[ip][jp]
    return a + fu * (b - a) + fv * (c - a) + fu * fv * (d - b - c + a)


def brute_force_value(
    running: Callable[[float, float, int], float],
    terminal: Callable[[float, float], float],
    K: int,
    velocity: VelocityOracle,
    og: OracleGrid,
    wall_value: float,
    sigma: float = 0.0,
    targets: Optional[Sequence[Tuple[int, int]]] = None,
) -> np.ndarray:
    """phi over (nT + 1, n1, n2) by direct dynamic programming.

    ``running(x1, x2, n)`` is l at time n, ``terminal(x1, x2)`` is g. With
    ``targets`` the minimum-time pinning is used (0 on targets, walls elsewhere
    on the ring, terminal slice at wall_value) and sigma is ignored.
    """
    n1, n2, nT = og.n1, og.n2, og.nT
    target_set = set(targets or [])
    minimum_time = targets is not None

    def on_ring(i, j):
        return i == 0 or j == 0 or i == n1 - 1 or j == n2 - 1

    phi = [[[0.0] * n2 for _ in range(n1)] for _ in range(nT + 1)]
    for i in range(n1):
        for j in range(n2):
            if minimum_time:
                phi[nT][i][j] = 0.0 if (i, j) in target_set else wall_value
            else:
                x, y = og.centre(i, j)
                phi[nT][i][j] = terminal(x, y)

    nu = 0.0 if minimum_time else sigma * og.dt / (og.dx1 * og.dx2)
    for n in range(nT, 0, -1):
        here = phi[n]
        cap = max(max(row) for row in here)
        for i in range(n1):
            for j in range(n2):
                if minimum_time and (i, j) in target_set:
                    phi[n - 1][i][j] = 0.0
                    continue
                if on_ring(i, j):
                    phi[n - 1][i][j] = wall_value
                    continue
                x, y = og.centre(i, j)
                cost = 1.0 if minimum_time else running(x, y, n)
                best = math.inf
                for k in range(1, K + 1):
                    v1, v2 = velocity(i, j, n, k)
                    val = min(_lookup(here, og, x + og.dt * v1, y + og.dt * v2), cap)
                    val = val + og.dt * cost
                    if val < best:
                        best = val
                if nu > 0.0:
                    # interior neighbours only; ring neighbours are replaced by the centre
                    c = here[i][j]
                    total = 0.0
                    for r, s in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                        total += c if on_ring(r, s) else here[r][s]
                    best = best + nu * (total - 4.0 * c)
                phi[n - 1][i][j] = min(best, wall_value)
    return np.array(phi)


def fast_sweep_distance(
    targets: Sequence[Tuple[int, int]],
    og: OracleGrid,
    walls: Optional[np.ndarray] = None,
    max_sweeps: int = 200,
) -> np.ndarray:
    """Unit-speed arrival time from the target cells (Godunov upwind, 4 sweep orders).

    Wall cells are never updated and never used as upwind neighbours.
    """
    if not targets:
        raise ConfigurationError("fast_sweep_distance needs at least one target cell")
    n1, n2 = og.n1, og.n2
    h1, h2 = og.dx1, og.dx2
    d = np.full((n1, n2), np.inf)
    fixed = np.zeros((n1, n2), dtype=bool)
    for i, j in targets:
        d[i, j] = 0.0
        fixed[i, j] = True
    blocked = np.zeros((n1, n2), dtype=bool) if walls is None else (walls & ~fixed)

    def neighbour(i, j):
        if 0 <= i < n1 and 0 <= j < n2 and not blocked[i, j]:
            return d[i, j]
        return math.inf

    orders = [
        (range(n1), range(n2)),
        (range(n1 - 1, -1, -1), range(n2)),
        (range(n1 - 1, -1, -1), range(n2 - 1, -1, -1)),
        (range(n1), range(n2 - 1, -1, -1)),
    ]
    for _ in range(max_sweeps):
        changed = False
        for rows, cols in orders:
            for i in rows:
                for j in cols:
                    if fixed[i, j] or blocked[i, j]:
                        continue
                    a = min(neighbour(i - 1, j), neighbour(i + 1, j))
                    b = min(neighbour(i, j - 1), neighbour(i, j + 1))
                    if math.isinf(a) and math.isinf(b):
                        continue
                    new = _godunov(a, b, h1, h2)
                    if new < d[i, j] - 1e-15:
                        d[i, j] = new
                        changed = True
        if not changed:
            break
    return d


def _godunov(a: float, b: float, h1: float, h2: float) -> float:
    """Solve ((u - a)+ / h1)^2 + ((u - b)+ / h2)^2 = 1 for u."""
    if math.isinf(b) or a + h1 <= b:
        return a + h1
    if math.isinf(a) or b + h2 <= a:
        return b + h2
    # both directions upwind
    w1, w2 = 1.0 / h1**2, 1.0 / h2**2
    A = w1 + w2
    B = -2.0 * (a * w1 + b * w2)
    C = a * a * w1 + b * b * w2 - 1.0
    return (-B + math.sqrt(max(B * B - 4.0 * A * C, 0.0))) / (2.0 * A)
