"""Builtin test scenarios and configuration document I/O."""

import logging
from pathlib import Path
from typing import Callable, Dict, List

import toml
import yaml
from pydantic import ValidationError

from crowd_mfg.models import (
    ConstantRunningCost,
    CostConfig,
    CostMode,
    DistanceTerminalCost,
    Exit,
    GridConfig,
    InitialDensity,
    LinearRhoRunningCost,
    LinearX1RunningCost,
    ModelConfig,
    Region,
    Scenario,
    Side,
    SolverConfig,
    TargetConfig,
    TargetSegment,
)
from crowd_mfg.utils import ConfigurationError, parse_document, read_document

logger = logging.getLogger(__name__)

# Test 1 has no repulsion and keeps the unit mass (density 100 in the square).
# With repulsion the peak density is 1 in test2, 0.5 in the two-exit room and
# 0.35 in test5: with K = 32 the sensory stencils carry up to 0.152 of kernel
# weight, so these keep dt * vmax below one cell on the 50x50 grids.
_CORNER_SQUARE = Region(x1=(0.0, 0.1), x2=(0.0, 0.1), mass=1.0)
_LIGHT_CORNER_SQUARE = Region(x1=(0.0, 0.1), x2=(0.0, 0.1), mass=0.01)
_ROOM_CENTER = (0.5, 0.5)


def _test1() -> Scenario:
    return Scenario(
        name="test1",
        grid=GridConfig(T=0.5, nT=600),
        model=ModelConfig(sigma=0.05, theta=0.1, c_rep=0.0),
        costs=CostConfig(
            mode=CostMode.FINITE_HORIZON,
            running=LinearRhoRunningCost(c=3.0),
            terminal=DistanceTerminalCost(center=_ROOM_CENTER),
        ),
        rho0=InitialDensity(regions=[_CORNER_SQUARE]),
        theta_presets=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45],
    )


def _test2() -> Scenario:
    return Scenario(
        name="test2",
        grid=GridConfig(T=1.0, nT=200),
        model=ModelConfig(sigma=0.0, theta=0.25, c_rep=6.0),
        costs=CostConfig(
            mode=CostMode.FINITE_HORIZON,
            running=LinearX1RunningCost(c0=3.0, c1=-2.0),
            terminal=DistanceTerminalCost(center=_ROOM_CENTER),
        ),
        rho0=InitialDensity(regions=[_LIGHT_CORNER_SQUARE]),
        theta_presets=[0.0, 0.25, 1.0],
    )


def _two_exit_room(name: str, theta: float, presets: List[float], fictitious_play: bool) -> Scenario:
    return Scenario(
        name=name,
        grid=GridConfig(T=1.5, nT=200),
        model=ModelConfig(sigma=0.0, theta=theta, c_rep=8.0),
        costs=CostConfig(mode=CostMode.MINIMUM_TIME, running=ConstantRunningCost()),
        rho0=InitialDensity(
            regions=[
                # bottom-centre group
                Region(x1=(0.44, 0.54), x2=(0.0, 0.1), mass=0.005),
                # right-centre group
                Region(x1=(0.9, 1.0), x2=(0.44, 0.54), mass=0.005),
            ]
        ),
        target=TargetConfig(
            exits=[
                Exit(name="left", side=Side.BOTTOM, center=0.15, width=0.2),
                Exit(name="right", side=Side.BOTTOM, center=0.85, width=0.2),
            ],
            segments=[TargetSegment(start=0.0, end=1.5, exits=["left", "right"])],
        ),
        solver=SolverConfig(fictitious_play=fictitious_play),
        theta_presets=presets,
    )


def _test3() -> Scenario:
    return _two_exit_room("test3", theta=0.15, presets=[0.15, 0.75], fictitious_play=True)


def _test4() -> Scenario:
    return _two_exit_room("test4", theta=0.15, presets=[0.0, 0.15, 0.75], fictitious_play=False)


def _test5() -> Scenario:
    return Scenario(
        name="test5",
        grid=GridConfig(T=2.5, nT=200),
        model=ModelConfig(sigma=0.0, theta=0.25, Theta=0.24, c_rep=8.0),
        costs=CostConfig(mode=CostMode.MINIMUM_TIME, running=ConstantRunningCost()),
        # a thin band whose front reaches the top door just as the switch is
        # announced; more mass than the door passes by t = 0.48
        rho0=InitialDensity(regions=[Region(x1=(0.26, 0.74), x2=(0.68, 0.76), mass=0.01344)]),
        target=TargetConfig(
            exits=[
                Exit(name="top", side=Side.TOP, center=0.5, width=0.2),
                Exit(name="bottom", side=Side.BOTTOM, center=0.5, width=0.2),
            ],
            segments=[
                TargetSegment(start=0.0, end=0.48, exits=["top"]),
                TargetSegment(start=0.48, end=2.5, exits=["bottom"]),
            ],
        ),
        theta_presets=[0.0, 0.25, 2.5],
    )


BUILTIN_SCENARIOS: Dict[str, Callable[[], Scenario]] = {
    "test1": _test1,
    "test2": _test2,
    "test3": _test3,
    "test4": _test4,
    "test5": _test5,
}


def builtin_scenario(name: str) -> Scenario:
    """One of the five reference scenarios, fully populated."""
    try:
        factory = BUILTIN_SCENARIOS[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario '{name}', choose from {sorted(BUILTIN_SCENARIOS)}"
        ) from None
    return factory()


def _format_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        path = ".".join(str(p) for p in err["loc"])
        msg = err["msg"]
        parts.append(f"{path}: {msg}" if path else msg)
    return "; ".join(parts)


def validate_scenario(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(_format_validation_error(e)) from e


def check_numerics(scenario: Scenario) -> None:
    """A-priori CFL and diffusion positivity, named after the fields to change."""
    # local import: the engine pulls in every solver module
    from crowd_mfg.mfg_engine import MFGEngine

    MFGEngine(scenario).check_stability()


def parse_config(document: str, fmt: str = "toml", check: bool = True) -> Scenario:
    """Parse and validate a scenario document (TOML or YAML)."""
    scenario = validate_scenario(parse_document(document, fmt=fmt))
    if check:
        check_numerics(scenario)
    return scenario


def load_scenario(path, check: bool = True) -> Scenario:
    scenario = validate_scenario(read_document(path))
    if check:
        check_numerics(scenario)
    logger.info(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario


def serialize(scenario: Scenario, fmt: str = "toml") -> str:
    """Inverse of parse_config."""
    data = scenario.model_dump(mode="json", exclude_none=True)
    if fmt == "toml":
        return toml.dumps(data)
    if fmt in ("yaml", "yml"):
        return yaml.safe_dump(data, sort_keys=False)
    raise ConfigurationError(f"unsupported document format '{fmt}'")


def write_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    fmt = path.suffix.lower().lstrip(".")
    path.write_text(serialize(scenario, fmt if fmt in ("yaml", "yml") else "toml"), encoding="utf-8")
    return path
