"""Scenario schema - pydantic models for every model and numerical parameter."""

from enum import Enum
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from crowd_mfg.config import (
    DEFAULT_MAX_ITERS,
    DEFAULT_NUM_CONTROLS,
    DEFAULT_R,
    DEFAULT_R0,
    DEFAULT_STAGNATION_WINDOW,
)


class CostMode(str, Enum):
    """Which optimal control problem the pedestrians solve."""
    FINITE_HORIZON = "finite_horizon"
    MINIMUM_TIME = "minimum_time"


class Side(str, Enum):
    """Sides of the rectangular domain."""
    BOTTOM = "bottom"
    TOP = "top"
    LEFT = "left"
    RIGHT = "right"


class FictitiousPlayRule(str, Enum):
    UNIFORM = "uniform"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============ Grid / model parameters ============

class GridConfig(_Section):
    """Space-time discretization."""
    size: Tuple[float, float] = (1.0, 1.0)
    n1: int = Field(default=50, ge=1)
    n2: int = Field(default=50, ge=1)
    T: float = Field(gt=0)
    nT: int = Field(ge=1)


class ModelConfig(_Section):
    """Crowd model parameters."""
    sigma: float = Field(default=0.0, ge=0)
    theta: float = Field(default=0.0, ge=0)  # prediction horizon
    Theta: Optional[float] = Field(default=None, ge=0)  # exit forecast horizon
    c_rep: float = Field(default=0.0, ge=0)
    r0: float = Field(default=DEFAULT_R0, ge=0)
    r: float = Field(default=DEFAULT_R, gt=0)
    K: int = Field(default=DEFAULT_NUM_CONTROLS, ge=2)

    @model_validator(mode="after")
    def _radii(self):
        if not self.r0 < self.r:
            raise ValueError("model.r0 must be smaller than model.r")
        return self


# ============ Costs ============

class ConstantRunningCost(_Section):
    kind: Literal["constant"] = "constant"
    value: float = 1.0

    def evaluate(self, x1: np.ndarray, x2: np.ndarray, rho: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x1), self.value, dtype=float)

    def depends_on_density(self) -> bool:
        return False


class LinearX1RunningCost(_Section):
    """l = c0 + c1 * x1 (Test 2 uses c0 = 3, c1 = -2)."""
    kind: Literal["linear_x1"] = "linear_x1"
    c0: float = 0.0
    c1: float = 0.0

    def evaluate(self, x1, x2, rho):
        return self.c0 + self.c1 * np.asarray(x1, dtype=float)

    def depends_on_density(self) -> bool:
        return False


class LinearRhoRunningCost(_Section):
    """l = c * rho (Test 1 uses c = 3)."""
    kind: Literal["linear_rho"] = "linear_rho"
    c: float = 0.0

    def evaluate(self, x1, x2, rho):
        return self.c * np.asarray(rho, dtype=float)

    def depends_on_density(self) -> bool:
        return self.c != 0.0


RunningCost = Annotated[
    Union[ConstantRunningCost, LinearX1RunningCost, LinearRhoRunningCost],
    Field(discriminator="kind"),
]


class DistanceTerminalCost(_Section):
    """g(x) = |x - center|."""
    kind: Literal["distance"] = "distance"
    center: Tuple[float, float] = (0.5, 0.5)

    def evaluate(self, x1, x2):
        return np.hypot(np.asarray(x1) - self.center[0], np.asarray(x2) - self.center[1])


class ConstantTerminalCost(_Section):
    kind: Literal["constant"] = "constant"
    value: float = 0.0

    def evaluate(self, x1, x2):
        return np.full(np.shape(x1), self.value, dtype=float)


class LinearX1TerminalCost(_Section):
    """g(x) = c0 + c1 * x1."""
    kind: Literal["linear_x1"] = "linear_x1"
    c0: float = 0.0
    c1: float = 1.0

    def evaluate(self, x1, x2):
        return self.c0 + self.c1 * np.asarray(x1, dtype=float)


TerminalCost = Annotated[
    Union[DistanceTerminalCost, ConstantTerminalCost, LinearX1TerminalCost],
    Field(discriminator="kind"),
]


class CostConfig(_Section):
    """Running and terminal costs. Minimum-time mode ignores both."""
    mode: CostMode = CostMode.FINITE_HORIZON
    running: RunningCost = Field(default_factory=ConstantRunningCost)
    terminal: Optional[TerminalCost] = None

    @model_validator(mode="after")
    def _terminal(self):
        if self.mode == CostMode.FINITE_HORIZON and self.terminal is None:
            raise ValueError("costs.terminal is required in finite_horizon mode")
        return self

    def depends_on_density(self) -> bool:
        return self.mode == CostMode.FINITE_HORIZON and self.running.depends_on_density()


# ============ Initial density ============

class Region(_Section):
    """Axis-aligned rectangle [x1_min, x1_max] x [x2_min, x2_max] carrying a mass."""
    x1: Tuple[float, float]
    x2: Tuple[float, float]
    mass: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _area(self):
        if not (self.x1[1] > self.x1[0] and self.x2[1] > self.x2[0]):
            raise ValueError("rho0.regions: region must have positive area")
        return self


class InitialDensity(_Section):
    regions: List[Region] = Field(min_length=1)

    @property
    def mass(self) -> float:
        return float(sum(r.mass for r in self.regions))


# ============ Targets ============

class Exit(_Section):
    """A segment of a domain side, centred at ``center`` along that side."""
    name: str
    side: Side
    center: float
    width: float = Field(gt=0)


class TargetSegment(_Section):
    """Exits open during the time interval (start, end]."""
    start: float = Field(ge=0)
    end: float
    exits: List[str] = Field(min_length=1)


class TargetConfig(_Section):
    exits: List[Exit] = Field(min_length=1)
    segments: List[TargetSegment] = Field(min_length=1)

    @model_validator(mode="after")
    def _names(self):
        names = {e.name for e in self.exits}
        if len(names) != len(self.exits):
            raise ValueError("target.exits: exit names must be unique")
        for seg in self.segments:
            unknown = set(seg.exits) - names
            if unknown:
                raise ValueError(f"target.segments: unknown exits {sorted(unknown)}")
        return self


# ============ Solver ============

class SolverConfig(_Section):
    """Forward-backward fixed point options."""
    tol: Optional[float] = Field(default=None, gt=0)  # default 1e-4 * initial mass
    max_iters: int = Field(default=DEFAULT_MAX_ITERS, ge=1)
    fictitious_play: bool = False
    fp_rule: FictitiousPlayRule = FictitiousPlayRule.UNIFORM
    stagnation_window: int = Field(default=DEFAULT_STAGNATION_WINDOW, ge=1)
    warm_start: bool = True


# ============ Scenario ============

class Scenario(_Section):
    """Every model/numerical parameter of one simulation."""
    name: str = "custom"
    grid: GridConfig
    model: ModelConfig = Field(default_factory=ModelConfig)
    costs: CostConfig
    rho0: InitialDensity
    target: Optional[TargetConfig] = None
    solver: SolverConfig = Field(default_factory=SolverConfig)
    theta_presets: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _consistency(self):
        T = self.grid.T
        if self.model.theta > T:
            raise ValueError(f"model.theta = {self.model.theta} exceeds grid.T = {T}")

        if self.costs.mode == CostMode.MINIMUM_TIME:
            if self.target is None:
                raise ValueError("target is required in minimum_time mode")
            _check_partition(self.target.segments, T)
            if self.model.Theta is not None:
                t_bar = self.target.segments[0].end
                if len(self.target.segments) > 1 and self.model.Theta > t_bar:
                    raise ValueError(
                        f"model.Theta = {self.model.Theta} exceeds the switch time {t_bar}"
                    )
        return self

    def with_theta(self, theta: float) -> "Scenario":
        """Copy with a different prediction horizon (re-validated)."""
        data = self.model_dump()
        data["model"]["theta"] = theta
        return Scenario.model_validate(data)


def _check_partition(segments: List[TargetSegment], T: float) -> None:
    eps = 1e-9 * max(T, 1.0)
    if abs(segments[0].start) > eps:
        raise ValueError("target.segments must start at t = 0")
    for prev, seg in zip(segments, segments[1:]):
        if abs(seg.start - prev.end) > eps:
            raise ValueError("target.segments must be contiguous")
    for seg in segments:
        if not seg.end > seg.start:
            raise ValueError("target.segments: empty time interval")
    if abs(segments[-1].end - T) > eps:
        raise ValueError("target.segments must end at grid.T")
