"""Summary metrics of a simulation: barycenters, turn and evacuation times."""

from typing import Dict, Optional

import numpy as np
import pandas as pd

from crowd_mfg.config import DOWNWARD_MIN_SLOPE, DOWNWARD_SPLIT_FRACTION, EVACUATION_FRACTION
from crowd_mfg.hjb import ControlSet
from crowd_mfg.mfg_engine import SimulationResult
from crowd_runner.models import RunSummary

# velocities below this (in domain units per time unit) count as zero
_VELOCITY_EPS = 1e-12


def slice_masses(result: SimulationResult) -> np.ndarray:
    return result.density_history.values.sum(axis=(1, 2)) * result.grid.cell_area


def barycenter(result: SimulationResult, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """(nT + 1, 2) barycenter per slice, NaN where the (masked) slice is empty."""
    g = result.grid
    X1, X2 = g.mesh()
    rho = result.density_history.values
    if mask is not None:
        rho = np.where(mask, rho, 0.0)
    mass = rho.sum(axis=(1, 2))
    out = np.full((len(rho), 2), np.nan)
    has_mass = mass > 0
    out[has_mass, 0] = (rho[has_mass] * X1).sum(axis=(1, 2)) / mass[has_mass]
    out[has_mass, 1] = (rho[has_mass] * X2).sum(axis=(1, 2)) / mass[has_mass]
    return out


def barycenter_velocity(trajectory: np.ndarray, dt: float) -> np.ndarray:
    """Forward differences; row n is the velocity over [t^n, t^{n+1}]."""
    return np.diff(trajectory, axis=0) / dt


def first_negative_after_nonnegative(velocity: np.ndarray, dt: float) -> Optional[float]:
    seen_nonnegative = False
    for n, v in enumerate(velocity):
        if np.isnan(v):
            continue
        if v >= -_VELOCITY_EPS:
            seen_nonnegative = True
        elif seen_nonnegative:
            return n * dt
    return None


def turn_time(result: SimulationResult) -> Optional[float]:
    """First outer time the x1 barycenter velocity turns negative."""
    v = barycenter_velocity(barycenter(result), result.grid.dt)
    return first_negative_after_nonnegative(v[:, 0], result.grid.dt)


def lower_half_downward_time(result: SimulationResult) -> Optional[float]:
    """First outer time the barycenter of the lower half of the crowd moves down.

    The lower half of slice n is the mass at or below that slice's barycenter, so a
    crowd translating upward is never counted as moving down.
    """
    g = result.grid
    _, X2 = g.mesh()
    middle = barycenter(result)[:, 1]
    with np.errstate(invalid="ignore"):
        mask = X2[None] <= middle[:, None, None]
    trajectory = barycenter(result, mask=mask)
    v = barycenter_velocity(trajectory, g.dt)[:, 1]
    for n, value in enumerate(v):
        if not np.isnan(value) and value < -_VELOCITY_EPS:
            return n * g.dt
    return None


def downward_mass_fraction(result: SimulationResult, min_slope: float = DOWNWARD_MIN_SLOPE) -> np.ndarray:
    """Per slice, the share of the interior mass whose chosen direction points down.

    Ring cells are left out: next to a wall the argmin points back into the room
    whatever the target.
    """
    g = result.grid
    a2 = ControlSet(result.control_history.K).directions[:, 1]
    down = a2[result.control_history.indices - 1] < -min_slope
    rho = np.where(g.boundary_mask(), 0.0, result.density_history.values)
    present = rho.sum(axis=(1, 2))
    moving_down = np.where(down, rho, 0.0).sum(axis=(1, 2))
    out = np.zeros(len(rho))
    np.divide(moving_down, present, out=out, where=present > 0)
    return out


def downward_split_time(result: SimulationResult, fraction: float = DOWNWARD_SPLIT_FRACTION) -> Optional[float]:
    """First outer time at which at least ``fraction`` of the crowd heads down."""
    reached = np.nonzero(downward_mass_fraction(result)[:-1] >= fraction)[0]
    if len(reached) == 0:
        return None
    return float(reached[0] * result.grid.dt)


def evacuation_time(result: SimulationResult, fraction: float = EVACUATION_FRACTION) -> Optional[float]:
    if result.initial_mass <= 0:
        return None
    reached = np.nonzero(result.evacuated_over_time >= fraction * result.initial_mass)[0]
    if len(reached) == 0:
        return None
    return float(reached[0] * result.grid.dt)


def exit_masses(result: SimulationResult) -> Dict[str, float]:
    return {name: float(series[-1]) for name, series in result.evacuated_by_exit.items()}


def metrics_table(result: SimulationResult) -> pd.DataFrame:
    """Per time step: mass, evacuated mass (total and per exit), barycenter."""
    g = result.grid
    trajectory = barycenter(result)
    table = pd.DataFrame(
        {
            "step": np.arange(g.nT + 1),
            "t": np.arange(g.nT + 1) * g.dt,
            "mass": slice_masses(result),
            "evacuated": result.evacuated_over_time,
            "barycenter_x1": trajectory[:, 0],
            "barycenter_x2": trajectory[:, 1],
        }
    )
    for name, series in result.evacuated_by_exit.items():
        table[f"evacuated_{name}"] = series
    return table


def summarize(result: SimulationResult) -> RunSummary:
    masses = slice_masses(result)
    return RunSummary(
        outer_steps=len(result.convergence),
        initial_mass=result.initial_mass,
        final_mass=float(max(masses[-1], 0.0)),
        evacuated_mass=float(result.evacuated_over_time[-1]),
        evacuation_time=evacuation_time(result),
        turn_time=turn_time(result),
        lower_half_downward_time=lower_half_downward_time(result),
        downward_split_time=downward_split_time(result),
        exit_masses=exit_masses(result),
        nonconverged_fraction=result.nonconverged_fraction,
    )
