"""Run manifest and summary schemas."""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunStatus(str, Enum):
    RUNNING = "running"
    COMPLETE = "complete"
    FAILED = "failed"


class RunSummary(BaseModel):
    """Scalar metrics of one run; None where a quantity never occurred."""
    outer_steps: int = Field(ge=0)
    initial_mass: float = Field(ge=0)
    final_mass: float = Field(ge=0)
    evacuated_mass: float = Field(default=0.0, ge=0)
    evacuation_time: Optional[float] = None  # time at which 99% of the mass left
    turn_time: Optional[float] = None  # first time the x1 barycenter velocity turns negative
    lower_half_downward_time: Optional[float] = None
    downward_split_time: Optional[float] = None  # first time 2% of the crowd chooses to head down
    exit_masses: Dict[str, float] = Field(default_factory=dict)
    nonconverged_fraction: float = Field(default=0.0, ge=0, le=1)


class RunManifest(BaseModel):
    """Written before the first frame and rewritten when the run ends."""
    scenario: Dict[str, Any]
    engine: Dict[str, Any] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    started_at: str
    duration_seconds: float = Field(default=0.0, ge=0)
    status: RunStatus = RunStatus.RUNNING
    summary: Optional[RunSummary] = None

    def to_document(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude_none=True)
