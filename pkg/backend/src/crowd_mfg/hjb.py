"""Semi-Lagrangian Hamilton-Jacobi-Bellman solver and control synthesis.

One backward step reads

    phi^{n-1}_{ij} = min_k { phi^n(omega^n_{ij}(a_k)) + dt * l^n_{ij} } + diffusion(phi^n)

and the optimal control at time n is the argmin of the same bracket. The
boundary ring stands in for the +inf walls with a finite ``wall_value``.
"""

import dataclasses
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from crowd_mfg.config import WALL_VALUE_FACTOR
from crowd_mfg.fields import ControlField, SpaceTimeDensity, ValueField
from crowd_mfg.fokker_planck import laplacian_zero_flux
from crowd_mfg.grid import Grid, interpolate_many
from crowd_mfg.interaction import (
    InteractionParams,
    Openings,
    SensoryStencil,
    candidate_velocities,
    interaction_velocity,
    project_boundary_velocity,
    total_velocity,
)
from crowd_mfg.models import CostConfig, CostMode, Exit, Side, TargetConfig
from crowd_mfg.utils import ConfigurationError, SchemeError

logger = logging.getLogger(__name__)


class ControlSet:
    """K unit vectors a_k = (cos 2 pi k / K, sin 2 pi k / K), k = 1..K."""

    def __init__(self, K: int):
        if K < 2:
            raise ConfigurationError(f"model.K must be >= 2, got {K}")
        self.K = K
        angles = 2.0 * np.pi * np.arange(1, K + 1) / K
        self.directions = np.column_stack([np.cos(angles), np.sin(angles)])

    def __len__(self) -> int:
        return self.K

    def direction(self, k: int) -> np.ndarray:
        return self.directions[k - 1]


# ============ Targets ============

def exit_openings(exit_: Exit, g: Grid) -> Openings:
    """Boundary cells whose centre lies within the exit segment."""
    openings = Openings.closed(g)
    half = 0.5 * exit_.width
    if exit_.side in (Side.BOTTOM, Side.TOP):
        along, tol = g.x1, 1e-9 * g.dx1
    else:
        along, tol = g.x2, 1e-9 * g.dx2
    mask = np.abs(along - exit_.center) <= half + tol
    if not mask.any():
        raise ConfigurationError(f"target.exits[{exit_.name}] covers no boundary cell")
    getattr(openings, exit_.side.value)[:] = mask
    return openings


@dataclasses.dataclass(frozen=True)
class ActiveSegment:
    start: float
    end: float
    exits: Tuple[str, ...]
    openings: Openings


class TargetSchedule:
    """Exits open over time, and what pedestrians believe about them.

    Until ``believed_switch_known_after`` (= switch time - Theta) agents assume
    the first segment's exits stay open forever; afterwards they know the true
    schedule. Theta = None means the switch is known from the start.
    """

    def __init__(
        self,
        segments: Sequence[ActiveSegment],
        exits: Dict[str, Openings],
        Theta: Optional[float] = None,
    ):
        if not segments:
            raise ConfigurationError("target.segments must not be empty")
        self.segments = list(segments)
        self.exits = dict(exits)
        self.Theta = Theta

    @property
    def switch_time(self) -> Optional[float]:
        if len(self.segments) < 2:
            return None
        return self.segments[0].end

    @property
    def believed_switch_known_after(self) -> Optional[float]:
        if self.switch_time is None:
            return None
        if self.Theta is None:
            return 0.0
        return self.switch_time - self.Theta

    def segment_index(self, t: float) -> int:
        eps = 1e-9 * max(self.segments[-1].end, 1.0)
        for idx, seg in enumerate(self.segments):
            if t <= seg.end + eps:
                return idx
        return len(self.segments) - 1

    def openings_at(self, t: float) -> Openings:
        return self.segments[self.segment_index(t)].openings

    def believed(self, s: float) -> "TargetSchedule":
        """The schedule as seen by agents deciding at outer time s."""
        known_after = self.believed_switch_known_after
        if known_after is None or s >= known_after - 1e-9:
            return self
        first = self.segments[0]
        forever = ActiveSegment(
            start=first.start, end=self.segments[-1].end, exits=first.exits, openings=first.openings
        )
        return TargetSchedule([forever], self.exits, Theta=None)

    def all_openings(self) -> Openings:
        out = self.segments[0].openings
        for seg in self.segments[1:]:
            out = out.union(seg.openings)
        return out


def build_target_schedule(target: TargetConfig, g: Grid, Theta: Optional[float] = None) -> TargetSchedule:
    exits = {e.name: exit_openings(e, g) for e in target.exits}
    segments = []
    for seg in target.segments:
        openings = Openings.closed(g)
        for name in seg.exits:
            openings = openings.union(exits[name])
        if not openings.any():
            raise ConfigurationError(f"no target active during ({seg.start}, {seg.end}]")
        segments.append(ActiveSegment(seg.start, seg.end, tuple(seg.exits), openings))
    return TargetSchedule(segments, exits, Theta=Theta)


# ============ Semi-Lagrangian pieces ============

def wall_value(costs: CostConfig, g: Grid, running_max: float = 1.0) -> float:
    """Finite stand-in for +inf.

    10 T in minimum time. In finite horizon 10 (T max(1, l_max) + max g), where
    l_max bounds the running cost over the sweep, so that no admissible path
    costs as much as a wall.
    """
    if costs.mode == CostMode.MINIMUM_TIME:
        return WALL_VALUE_FACTOR * g.T
    X1, X2 = g.mesh()
    g_max = float(np.max(costs.terminal.evaluate(X1, X2)))
    return WALL_VALUE_FACTOR * (g.T * max(running_max, 1.0) + max(g_max, 0.0))


def characteristic_foot(
    i: int,
    j: int,
    n: int,
    k: int,
    rho_theta_slice: np.ndarray,
    controls: ControlSet,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
    g: Grid,
    openings: Optional[Openings] = None,
) -> np.ndarray:
    """omega = centre(i, j) + dt * V_projected(i, j; a_k, rho^theta(t^n)), clamped."""
    v_int = interaction_velocity(rho_theta_slice, i, j, k, stencils, params)
    v = project_boundary_velocity(total_velocity(controls.direction(k), v_int), i, j, g, openings)
    c = g.center(i, j)
    p1, p2 = g.clamp(c[0] + g.dt * v[0], c[1] + g.dt * v[1])
    return np.array([float(p1), float(p2)])


class HJBSolver:
    """Backward sweep producing phi and alpha* together.

    ``stop`` ends the sweep at time index ``stop``: phi^n and alpha^n are
    computed for n >= stop only; earlier slices hold wall_value and index 1.
    """

    def __init__(
        self,
        g: Grid,
        costs: CostConfig,
        controls: ControlSet,
        stencils: Sequence[SensoryStencil],
        params: InteractionParams,
        sigma: float = 0.0,
        schedule: Optional[TargetSchedule] = None,
    ):
        if costs.mode == CostMode.MINIMUM_TIME and schedule is None:
            raise ConfigurationError("target is required in minimum_time mode")
        self.g = g
        self.costs = costs
        self.controls = controls
        self.stencils = stencils
        self.params = params
        self.sigma = sigma if costs.mode == CostMode.FINITE_HORIZON else 0.0
        self.schedule = schedule
        self._X1, self._X2 = g.mesh()
        self._ring = g.boundary_mask()
        running_max = 1.0
        if not self.minimum_time and not costs.depends_on_density():
            running_max = float(np.max(self._running_cost(np.zeros(g.shape))))
        self.wall_value = wall_value(costs, g, running_max)
        self._static_velocities: Dict[object, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def minimum_time(self) -> bool:
        return self.costs.mode == CostMode.MINIMUM_TIME

    def _openings(self, schedule: Optional[TargetSchedule], n: int):
        if schedule is None:
            return None, None
        seg = schedule.segment_index(self.g.time(n))
        return seg, schedule.segments[seg].openings

    def _velocities(self, rho_theta, n, seg_key, openings, cache):
        # with no repulsion the candidate velocities do not read rho
        if self.params.c_rep == 0.0:
            key = (id(openings), seg_key)
            if key not in self._static_velocities:
                self._static_velocities[key] = candidate_velocities(
                    np.zeros(self.g.shape),
                    self.controls.directions,
                    self.stencils,
                    self.params,
                    self.g,
                    openings,
                )
            return self._static_velocities[key]
        key = (rho_theta.canonical_index(n), id(openings))
        if key not in cache:
            cache[key] = candidate_velocities(
                rho_theta.values[n], self.controls.directions, self.stencils, self.params, self.g, openings
            )
        return cache[key]

    def _running_cost(self, rho_slice: np.ndarray) -> np.ndarray:
        if self.minimum_time:
            return np.ones(self.g.shape)
        return self.costs.running.evaluate(self._X1, self._X2, rho_slice)

    def _candidates(self, phi_n, rho_theta, n, schedule, cache) -> np.ndarray:
        """Bracket values for every control, shape (K, n1, n2)."""
        seg, openings = self._openings(schedule, n)
        v1, v2 = self._velocities(rho_theta, n, seg, openings, cache)
        p1, p2 = self.g.clamp(self._X1 + self.g.dt * v1, self._X2 + self.g.dt * v2)
        # bilinear values never exceed the slice maximum; trims rounding overshoot
        interp = np.minimum(interpolate_many(phi_n, p1, p2, self.g), np.max(phi_n))
        return interp + self.g.dt * self._running_cost(rho_theta.values[n])

    def wall_value_for(self, rho_theta: SpaceTimeDensity) -> float:
        """Wall value of one sweep; a density-dependent l raises it with the crowd."""
        if self.minimum_time or not self.costs.depends_on_density():
            return self.wall_value
        running_max = float(np.max(self._running_cost(rho_theta.values)))
        return wall_value(self.costs, self.g, running_max)

    def _pin(self, phi: np.ndarray, schedule: Optional[TargetSchedule], n: int, wall: float) -> None:
        phi[self._ring] = wall
        if self.minimum_time:
            phi[schedule.openings_at(self.g.time(n)).cells(self.g)] = 0.0

    def terminal_slice(self, schedule: Optional[TargetSchedule], wall: Optional[float] = None) -> np.ndarray:
        if self.minimum_time:
            wall = self.wall_value if wall is None else wall
            phi = np.full(self.g.shape, wall)
            self._pin(phi, schedule, self.g.nT, wall)
            return phi
        # the finite-horizon terminal slice is g everywhere
        return self.costs.terminal.evaluate(self._X1, self._X2).astype(float)

    def solve(
        self,
        rho_theta: SpaceTimeDensity,
        believed_at: float = 0.0,
        stop: int = 0,
    ) -> Tuple[ValueField, ControlField]:
        g = self.g
        if len(rho_theta) != g.nT + 1:
            raise SchemeError(f"rho_theta has {len(rho_theta)} slices, expected {g.nT + 1}")
        schedule = self.schedule.believed(believed_at) if self.schedule is not None else None

        wall = self.wall_value_for(rho_theta)
        phi = np.full((g.nT + 1,) + g.shape, wall)
        alpha = np.ones((g.nT + 1,) + g.shape, dtype=np.int64)
        phi[g.nT] = self.terminal_slice(schedule, wall)
        diffusion = self.sigma * g.dt / g.cell_area
        cache: Dict[object, Tuple[np.ndarray, np.ndarray]] = {}

        for n in range(g.nT, stop - 1, -1):
            values = self._candidates(phi[n], rho_theta, n, schedule, cache)
            best = np.argmin(values, axis=0)  # first minimum = lowest index
            alpha[n] = best + 1
            if n == stop or n == 0:
                continue
            nxt = np.take_along_axis(values, best[None], axis=0)[0]
            if diffusion > 0.0:
                lap = np.zeros(g.shape)
                if g.n1 > 2 and g.n2 > 2:
                    lap[1:-1, 1:-1] = laplacian_zero_flux(phi[n][1:-1, 1:-1])
                nxt = nxt + diffusion * lap
            nxt = np.minimum(nxt, wall)
            self._pin(nxt, schedule, n - 1, wall)
            if not np.all(np.isfinite(nxt)):
                raise SchemeError(f"non-finite value function at time index {n - 1}")
            phi[n - 1] = nxt

        logger.debug(f"HJB sweep {g.nT} -> {stop}: {len(cache)} distinct velocity slices, wall {wall:.4g}")
        return ValueField(phi, wall), ControlField(alpha, self.controls.K)

    def synthesize(
        self,
        phi: ValueField,
        rho_theta: SpaceTimeDensity,
        believed_at: float = 0.0,
        stop: int = 0,
    ) -> ControlField:
        """argmin of the bracket on a given phi, for every n >= stop."""
        schedule = self.schedule.believed(believed_at) if self.schedule is not None else None
        alpha = np.ones(phi.values.shape, dtype=np.int64)
        cache: Dict[object, Tuple[np.ndarray, np.ndarray]] = {}
        for n in range(self.g.nT, stop - 1, -1):
            values = self._candidates(phi.values[n], rho_theta, n, schedule, cache)
            alpha[n] = np.argmin(values, axis=0) + 1
        return ControlField(alpha, self.controls.K)


def sl_backward_sweep(
    rho_theta: SpaceTimeDensity,
    costs: CostConfig,
    controls: ControlSet,
    g: Grid,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
    sigma: float = 0.0,
) -> ValueField:
    """Finite-horizon value function over the whole of [0, T]."""
    if costs.mode != CostMode.FINITE_HORIZON:
        raise ConfigurationError("sl_backward_sweep needs costs.mode = finite_horizon")
    phi, _ = HJBSolver(g, costs, controls, stencils, params, sigma).solve(rho_theta)
    return phi


def minimum_time_sweep(
    rho_theta: SpaceTimeDensity,
    schedule: TargetSchedule,
    believed_at: float,
    controls: ControlSet,
    g: Grid,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
) -> ValueField:
    """Minimum-time value with phi = 0 on the believed targets and walls elsewhere on the ring."""
    costs = CostConfig(mode=CostMode.MINIMUM_TIME)
    solver = HJBSolver(g, costs, controls, stencils, params, schedule=schedule)
    phi, _ = solver.solve(rho_theta, believed_at=believed_at)
    return phi


def synthesize_control(
    phi: ValueField,
    rho_theta: SpaceTimeDensity,
    costs: CostConfig,
    controls: ControlSet,
    g: Grid,
    stencils: Sequence[SensoryStencil],
    params: InteractionParams,
    schedule: Optional[TargetSchedule] = None,
    believed_at: float = 0.0,
) -> ControlField:
    solver = HJBSolver(g, costs, controls, stencils, params, schedule=schedule)
    return solver.synthesize(phi, rho_theta, believed_at=believed_at)


def decoupled(costs: CostConfig, params: InteractionParams) -> bool:
    """True when the HJB does not read rho^theta at all."""
    return params.c_rep == 0.0 and not costs.depends_on_density()

