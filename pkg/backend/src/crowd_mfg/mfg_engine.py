"""Limited-prediction MFG: window fixed point at each outer step, then the main march."""

import dataclasses
import logging
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import tqdm

from crowd_mfg.config import (
    CFL_WARN_MARGIN,
    DEFAULT_TOL_PER_MASS,
    EVACUATION_FRACTION,
    MIN_ITERS,
)
from crowd_mfg.fields import (
    ControlField,
    DensityField,
    FictitiousPlay,
    SpaceTimeDensity,
    cell_average_init,
    l1_distance,
    total_mass,
)
from crowd_mfg.fokker_planck import absorb_target_mass, check_diffusion_positivity, push_forward_step
from crowd_mfg.grid import Grid, build_grid, check_cfl
from crowd_mfg.hjb import ControlSet, HJBSolver, TargetSchedule, build_target_schedule, decoupled
from crowd_mfg.interaction import InteractionParams, Openings, build_stencils, velocity_bound
from crowd_mfg.models import CostMode, Scenario
from crowd_mfg.utils import CFLViolation, ConfigurationError, SchemeError

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    CONVERGED = "converged"
    STABILIZED = "stabilized"
    EXHAUSTED = "exhausted"


@dataclasses.dataclass
class WindowSolveOptions:
    max_iters: int
    tol: float
    use_fictitious_play: bool = False
    stagnation_window: int = 5
    warm_start: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError(f"solver.max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ConfigurationError(f"solver.tol must be > 0, got {self.tol}")
        if self.stagnation_window < 1:
            raise ConfigurationError(
                f"solver.stagnation_window must be >= 1, got {self.stagnation_window}"
            )

    @classmethod
    def from_scenario(cls, scenario: Scenario, initial_mass: float) -> "WindowSolveOptions":
        solver = scenario.solver
        tol = solver.tol
        if tol is None:
            # an empty crowd still needs a positive tolerance
            tol = DEFAULT_TOL_PER_MASS * (initial_mass if initial_mass > 0 else 1.0)
        return cls(
            max_iters=solver.max_iters,
            tol=tol,
            use_fictitious_play=solver.fictitious_play,
            stagnation_window=solver.stagnation_window,
            warm_start=solver.warm_start,
        )


@dataclasses.dataclass
class ConvergenceRecord:
    outer_step: int
    iterates: List[float]
    verdict: Verdict

    @property
    def converged(self) -> bool:
        return self.verdict == Verdict.CONVERGED


@dataclasses.dataclass
class SimulationResult:
    """Everything the main march produced."""
    grid: Grid
    density_history: SpaceTimeDensity
    control_history: ControlField
    convergence: List[ConvergenceRecord]
    evacuated_over_time: np.ndarray
    evacuated_by_exit: Dict[str, np.ndarray]
    initial_mass: float
    tol: float

    @property
    def nonconverged_fraction(self) -> float:
        if not self.convergence:
            return 0.0
        return sum(not r.converged for r in self.convergence) / len(self.convergence)


def judge(errors: Sequence[float], tol: float, window: int) -> Optional[Verdict]:
    """Stopping rule on the E_k series; None means keep iterating."""
    if len(errors) < MIN_ITERS:
        return None
    if errors[-1] <= tol:
        return Verdict.CONVERGED
    if len(errors) >= window + 1:
        recent = errors[-(window + 1):]
        if max(recent) - min(recent) < tol:
            return Verdict.STABILIZED
    return None


def build_rho_theta(history, prediction: Sequence[DensityField], g: Grid) -> SpaceTimeDensity:
    """Acquired slices 0..s, predicted slices s+1..s+theta, then the last one frozen.

    ``history`` holds slices 0..s (an array or a sequence of DensityField).
    """
    if isinstance(history, np.ndarray):
        acquired = history
    else:
        acquired = np.stack([h.values for h in history]) if len(history) else np.zeros((0,) + g.shape)
    if len(acquired) == 0:
        raise SchemeError("rho^theta needs the acquired slice at s")
    s = len(acquired) - 1
    last = s + len(prediction)
    if last > g.nT:
        raise SchemeError(f"prediction runs past T: slice {last} > {g.nT}")

    values = np.empty((g.nT + 1,) + g.shape)
    values[: s + 1] = acquired
    for m, slice_ in enumerate(prediction):
        values[s + 1 + m] = slice_.values
    values[last + 1:] = values[last]
    return SpaceTimeDensity(values, frozen_from=last)


class MFGEngine:
    """Runs one scenario: a priori checks, the window solves and the main march."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        gc = scenario.grid
        self.grid = build_grid(gc.size, gc.n1, gc.n2, gc.T, gc.nT)
        m = scenario.model
        self.sigma = m.sigma
        self.theta_steps = self.grid.steps(m.theta)
        self.controls = ControlSet(m.K)
        self.params = InteractionParams(c_rep=m.c_rep, r0=m.r0, r=m.r)
        self.stencils = build_stencils(self.grid, self.params, self.controls.directions)
        self.minimum_time = scenario.costs.mode == CostMode.MINIMUM_TIME

        self.schedule: Optional[TargetSchedule] = None
        if self.minimum_time:
            self.schedule = build_target_schedule(scenario.target, self.grid, Theta=m.Theta)
        self.hjb = HJBSolver(
            self.grid,
            scenario.costs,
            self.controls,
            self.stencils,
            self.params,
            sigma=self.sigma,
            schedule=self.schedule,
        )
        self.rho0 = cell_average_init(scenario.rho0, self.grid)
        self.initial_mass = total_mass(self.rho0, self.grid)
        self._cfl_warned = False

    @property
    def decoupled(self) -> bool:
        return decoupled(self.scenario.costs, self.params)

    def check_stability(self) -> float:
        """A-priori CFL and diffusion checks; returns the CFL ratio."""
        rho_max = float(self.rho0.values.max()) if self.rho0.values.size else 0.0
        vmax = velocity_bound(self.stencils, self.params, rho_max)
        report = check_cfl(self.grid, vmax)
        logger.info(f"CFL check: vmax={vmax:.4f}, dt*vmax/dx={report.ratio:.4f}")
        if not report.passed:
            raise CFLViolation(
                f"CFL condition fails a priori: dt*vmax/min(dx) = {report.ratio:.4f} > 1 "
                f"(vmax={vmax:.4f}, grid.nT too small or model.c_rep too large)",
                ratio=report.ratio,
            )
        check_diffusion_positivity(self.grid, self.sigma)
        return report.ratio

    # ============ Target helpers ============

    def _true_openings(self, n: int) -> Optional[Openings]:
        if self.schedule is None:
            return None
        return self.schedule.openings_at(self.grid.time(n))

    def _believed_openings(self, n: int, believed_at: float) -> Optional[Openings]:
        if self.schedule is None:
            return None
        return self.schedule.believed(believed_at).openings_at(self.grid.time(n))

    def _exit_shares(self, mass_by_cell: np.ndarray) -> Dict[str, float]:
        shares = {}
        for name, openings in self.schedule.exits.items():
            shares[name] = float(mass_by_cell[openings.cells(self.grid)].sum())
        return shares

    def _track_cfl(self, ratio: float, s: int) -> None:
        if not self._cfl_warned and 1.0 - ratio < CFL_WARN_MARGIN:
            self._cfl_warned = True
            logger.warning(f"CFL margin below {CFL_WARN_MARGIN:.0%} at outer step {s}: ratio {ratio:.4f}")

    # ============ Window MFG ============

    def predict_forward(
        self,
        rho_s: DensityField,
        alpha: ControlField,
        s_index: int,
        theta_steps: Optional[int] = None,
        believed_at: Optional[float] = None,
    ) -> List[DensityField]:
        """Push rho(., s) forward with the window's controls for up to theta steps."""
        if theta_steps is None:
            theta_steps = self.theta_steps
        if believed_at is None:
            believed_at = self.grid.time(s_index)
        steps = min(theta_steps, self.grid.nT - s_index)
        current = rho_s
        out = []
        for m in range(max(steps, 0)):
            n = s_index + m
            openings = self._believed_openings(n, believed_at)
            current, _ = push_forward_step(
                current,
                alpha.slice(n),
                self.grid,
                self.controls.directions,
                self.stencils,
                self.params,
                self.sigma,
                openings,
            )
            if self.minimum_time:
                targets = self._believed_openings(n + 1, believed_at).cells(self.grid)
                current, _ = absorb_target_mass(current, targets, self.grid)
            out.append(current)
        return out

    def solve_window_mfg(
        self,
        s: int,
        history: np.ndarray,
        opts: WindowSolveOptions,
        warm_control: Optional[ControlField] = None,
    ) -> Tuple[ControlField, ConvergenceRecord, SpaceTimeDensity]:
        """Forward-backward fixed point on the window starting at s.

        ``history`` holds at least slices 0..s of the main density.
        """
        acquired = history[: s + 1]
        rho_s = DensityField(acquired[s])
        t_s = self.grid.time(s)

        prediction: List[DensityField] = []
        if warm_control is not None and opts.warm_start and s > 0:
            prediction = self.predict_forward(rho_s, warm_control, s, believed_at=t_s)
        rho_prev = build_rho_theta(acquired, prediction, self.grid)

        play = FictitiousPlay() if opts.use_fictitious_play else None
        errors: List[float] = []
        alpha = None
        verdict = Verdict.EXHAUSTED
        for k in range(1, max(opts.max_iters, MIN_ITERS) + 1):
            hjb_input = rho_prev if play is None or play.average is None else play.average
            _, alpha = self.hjb.solve(hjb_input, believed_at=t_s, stop=s)
            prediction = self.predict_forward(rho_s, alpha, s, believed_at=t_s)
            rho_k = build_rho_theta(acquired, prediction, self.grid)

            e_k = l1_distance(rho_k, rho_prev, self.grid)
            errors.append(e_k)
            logger.debug(f"s={s} k={k} E_k={e_k:.6e}")
            if play is not None:
                play.update(rho_k)
            rho_prev = rho_k

            decision = judge(errors, opts.tol, opts.stagnation_window)
            if decision is not None:
                verdict = decision
                break

        return alpha, ConvergenceRecord(outer_step=s, iterates=errors, verdict=verdict), rho_prev

    # ============ Main march ============

    def run_simulation(
        self,
        opts: Optional[WindowSolveOptions] = None,
        progress: bool = False,
        on_step: Optional[Callable[[int, ConvergenceRecord], None]] = None,
    ) -> SimulationResult:
        g = self.grid
        if opts is None:
            opts = WindowSolveOptions.from_scenario(self.scenario, self.initial_mass)
        self.check_stability()
        logger.info(
            f"Running '{self.scenario.name}': theta={self.scenario.model.theta} "
            f"({self.theta_steps} steps), {g.n1}x{g.n2} cells, nT={g.nT}, "
            f"fictitious_play={opts.use_fictitious_play}, tol={opts.tol:.3e}"
        )

        history = np.zeros((g.nT + 1,) + g.shape)
        history[0] = self.rho0.values
        controls = np.ones((g.nT + 1,) + g.shape, dtype=np.int64)
        evacuated = np.zeros(g.nT + 1)
        exit_names = list(self.schedule.exits) if self.schedule is not None else []
        by_exit = {name: np.zeros(g.nT + 1) for name in exit_names}
        records: List[ConvergenceRecord] = []
        warm: Optional[ControlField] = None
        milestone_hit = False

        for s in tqdm.tqdm(range(g.nT), desc="outer steps", disable=not progress):
            alpha, record, _ = self.solve_window_mfg(s, history, opts, warm)
            records.append(record)
            if not record.converged:
                tqdm.tqdm.write(
                    f"step {s} (t={g.time(s):.4f}): {record.verdict.value} after "
                    f"{len(record.iterates)} iterations, E_k={record.iterates[-1]:.3e}"
                )
                logger.warning(f"Window solve at step {s} did not converge ({record.verdict.value})")

            controls[s] = alpha.slice(s)
            rho_next, report = push_forward_step(
                DensityField(history[s]),
                alpha.slice(s),
                g,
                self.controls.directions,
                self.stencils,
                self.params,
                self.sigma,
                self._true_openings(s),
            )
            self._track_cfl(report.cfl_ratio, s)
            step_evacuated = report.mass_evacuated
            step_by_exit = {}
            if self.minimum_time:
                step_by_exit = self._exit_shares(report.evacuated_by_cell)
                targets = self._true_openings(s + 1).cells(g)
                absorbed_cells = np.where(targets, rho_next.values, 0.0) * g.cell_area
                rho_next, absorbed = absorb_target_mass(rho_next, targets, g)
                step_evacuated += absorbed
                for name, share in self._exit_shares(absorbed_cells).items():
                    step_by_exit[name] += share

            history[s + 1] = rho_next.values
            evacuated[s + 1] = evacuated[s] + step_evacuated
            for name in exit_names:
                by_exit[name][s + 1] = by_exit[name][s] + step_by_exit.get(name, 0.0)

            if (
                self.minimum_time
                and not milestone_hit
                and self.initial_mass > 0
                and evacuated[s + 1] >= EVACUATION_FRACTION * self.initial_mass
            ):
                milestone_hit = True
                tqdm.tqdm.write(f"{EVACUATION_FRACTION:.0%} evacuated at t={g.time(s + 1):.4f}")

            if on_step is not None:
                on_step(s, record)
            warm = alpha
            if s == g.nT - 1:
                controls[g.nT] = alpha.slice(g.nT)

        n_bad = sum(not r.converged for r in records)
        logger.info(f"Run complete: {n_bad}/{len(records)} outer steps not converged")
        return SimulationResult(
            grid=g,
            density_history=SpaceTimeDensity(history),
            control_history=ControlField(controls, self.controls.K),
            convergence=records,
            evacuated_over_time=evacuated,
            evacuated_by_exit=by_exit,
            initial_mass=self.initial_mass,
            tol=opts.tol,
        )


def run_simulation(
    scenario: Scenario,
    opts: Optional[WindowSolveOptions] = None,
    progress: bool = False,
) -> SimulationResult:
    return MFGEngine(scenario).run_simulation(opts, progress=progress)
