import math
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from app.schemas.explain import Attribution


class Direction(str, Enum):
    DECREASE = "decrease"
    INCREASE = "increase"
    HOLD = "hold"


class TelemetryRecord(BaseModel):
    record_id: Optional[str] = Field(None, description="Caller-supplied record ID")
    features: Dict[str, float] = Field(..., description="Feature name to value")

    @field_validator("features")
    @classmethod
    def validate_finite(cls, v):
        bad = [name for name, value in v.items() if not math.isfinite(value)]
        if bad:
            raise ValueError(f"Non-finite values for: {', '.join(sorted(bad))}")
        return v


class ControlTarget(BaseModel):
    parameter: str = Field(..., description="Tunable RAN parameter")
    direction: Direction = Field(..., description="Recommended adjustment")
    contribution: float = Field(..., description="Attributed power [W]")


class ControlMessage(BaseModel):
    """E2-style tuning recommendation (emulated, not E2AP-encoded)"""

    record_id: Optional[str] = Field(None, description="Record the message answers")
    predicted_power: float = Field(..., description="Predicted power [W]")
    targets: List[ControlTarget] = Field(..., description="Ordered by contribution desc")
    policy_note: str = Field(..., description="Human-readable rationale")


class RicResponse(BaseModel):
    record_id: Optional[str] = None
    predicted_power: float
    attribution: Attribution
    control: ControlMessage


class RicErrorLine(BaseModel):
    line: int = Field(..., description="1-based input line number")
    record_id: Optional[str] = None
    error: str
