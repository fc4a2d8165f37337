"""
Pydantic models for the plan service request/response bodies
"""
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator


class StartState(BaseModel):
    x: float = Field(..., description="Position x", examples=[0.5])
    y: float = Field(..., description="Position y", examples=[0.5])
    vx: float = Field(0.0, description="Velocity x")
    vy: float = Field(0.0, description="Velocity y")


class PlanRequest(BaseModel):
    """Request model for a guided plan"""
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "goal": {"state": {"x": 4.5, "y": 4.5}},
                "start": {"x": 0.5, "y": 0.5, "vx": 0.0, "vy": 0.0},
                "seed": 0,
            }
        }
    )

    goal: dict[str, Any] = Field(..., description="Single-key tagged goal spec", examples=[{"state": {"x": 4.5, "y": 4.5}}])
    start: StartState = Field(..., description="Current state, becomes row 0 of the plan")
    seed: int = Field(0, ge=0, description="Sampling seed")
    eta: float | None = Field(None, ge=0.0, description="Guidance scale override")
    grad_clip: float | None = Field(None, gt=0.0, description="Guidance norm clip override")
    guide_from: int | None = Field(None, ge=1, description="Guide only at diffusion steps n <= guide_from")
    repeats: int | None = Field(None, ge=1, description="Guidance applications per reverse step")

    def guidance_overrides(self) -> dict[str, Any]:
        fields = ("eta", "grad_clip", "guide_from", "repeats")
        return {name: getattr(self, name) for name in fields if getattr(self, name) is not None}


class PlanResponse(BaseModel):
    """Response model for a guided plan"""
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "status": "success",
                "horizon": 2,
                "states": [[0.5, 0.5, 0.0, 0.0], [0.51, 0.5, 0.1, 0.0]],
                "energy": 31.2,
            }
        }
    )

    status: Literal["success", "error"]
    horizon: int | None = None
    states: list[list[float]] | None = None
    energy: float | None = None
    message: str | None = None


class EnergyRequest(BaseModel):
    goal: dict[str, Any] = Field(..., description="Single-key tagged goal spec")
    states: list[list[float]] = Field(..., description="Window rows [x, y, vx, vy]")

    @field_validator("states")
    @classmethod
    def validate_rows(cls, v: list[list[float]]) -> list[list[float]]:
        if not v:
            raise ValueError("states cannot be empty")
        if len({len(row) for row in v}) != 1:
            raise ValueError("all state rows must have the same length")
        return v


class EnergyResponse(BaseModel):
    status: Literal["success", "error"]
    energy: float | None = None
    gradient: list[list[float]] | None = None
    message: str | None = None


class HealthResponse(BaseModel):
    """Response model for health endpoint"""
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "status": "healthy",
                "planner_loaded": False,
            }
        }
    )

    status: Literal["healthy"] = Field(..., description="Health status of the API", examples=["healthy"])
    planner_loaded: bool = Field(..., description="Whether the planner checkpoint is in memory")
