"""
Pydantic models for the pipeline configuration
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

import config


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class MazeSpec(_Section):
    """Grid maze: blocked cells are unit squares [i, i+1] x [j, j+1]."""
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)

    width: int = Field(5, ge=1, description="Maze width in cells")
    height: int = Field(5, ge=1, description="Maze height in cells")
    blocked: tuple[tuple[int, int], ...] = Field((), description="Blocked (column, row) cells")
    dt: float = Field(0.1, gt=0.0, description="Integrator step size")
    v_max: float = Field(1.0, gt=0.0, description="Per-axis speed limit")

    @field_validator("blocked", mode="before")
    @classmethod
    def _sorted_cells(cls, v: Any) -> tuple[tuple[int, int], ...]:
        cells = {tuple(int(c) for c in cell) for cell in v}
        if any(len(cell) != 2 for cell in cells):
            raise ValueError("each blocked cell must be a [column, row] pair")
        return tuple(sorted(cells))

    @model_validator(mode="after")
    def _cells_inside(self) -> MazeSpec:
        for i, j in self.blocked:
            if not (0 <= i < self.width and 0 <= j < self.height):
                raise ValueError(f"blocked cell ({i}, {j}) lies outside the {self.width}x{self.height} grid")
        return self


class DatasetConfig(_Section):
    n_steps: int = Field(200_000, ge=2, description="Total states to generate")
    episode_length: int = Field(400, ge=2, description="Fixed episode length L")
    seed: int = Field(0, ge=0)
    kp: float = Field(1.0, gt=0.0, description="Generator proportional gain")
    kd: float = Field(0.5, gt=0.0, description="Generator damping gain")
    waypoint_radius: float = Field(0.3, gt=0.0, description="Resample the waypoint inside this radius")
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _enough_steps(self) -> DatasetConfig:
        if self.n_steps < self.episode_length:
            raise ValueError("n_steps must be >= episode_length")
        return self


class PlannerConfig(_Section):
    # schedule
    diffusion_steps: int = Field(100, ge=1, description="N")
    beta_min: float = Field(1e-4, gt=0.0, lt=1.0)
    beta_max: float = Field(0.02, gt=0.0, lt=1.0)
    # architecture
    horizon: int = Field(64, ge=2, description="Plan window length H")
    width: int = Field(512, ge=1)
    depth: int = Field(4, ge=1, description="Hidden layers (first + residual)")
    time_dim: int = Field(64, ge=2)
    # training
    batch: int = Field(128, ge=1)
    steps: int = Field(20_000, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    seed: int = Field(0, ge=0)
    holdout_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    log_every: int = Field(500, ge=1)
    progress: bool = True

    @model_validator(mode="after")
    def _beta_order(self) -> PlannerConfig:
        if self.beta_min > self.beta_max:
            raise ValueError("beta_min must be <= beta_max")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")
        return self


class GuidanceConfig(_Section):
    eta: float = Field(1.0, ge=0.0, description="Guidance scale")
    grad_clip: float = Field(1.0, gt=0.0, description="Max guidance norm G_max")
    guide_from: int | None = Field(None, ge=1, description="Guide at steps n <= guide_from; None means N")
    repeats: int = Field(1, ge=1)


class ExecutorConfig(_Section):
    kind: Literal["pd", "learned"] = "pd"
    kp: float = Field(4.0, gt=0.0)
    kd: float = Field(4.0, gt=0.0)
    max_offset: int = Field(8, ge=1, description="T_a")
    n_tuples: int = Field(100_000, ge=1)
    holdout_fraction: float = Field(0.1, ge=0.0, lt=1.0, description="Episodes kept out of training when measuring reach rates")
    hidden: tuple[int, ...] = (256, 256)
    batch: int = Field(256, ge=1)
    steps: int = Field(5000, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    seed: int = Field(0, ge=0)
    log_every: int = Field(500, ge=1)
    progress: bool = True


class GoalActivation(_Section):
    step: int = Field(..., ge=0)
    goal: Any

    @field_validator("goal", mode="before")
    @classmethod
    def _parse_goal(cls, v: Any) -> Any:
        from models.goal_spec import GOAL_TYPES, parse_goal_obj

        return v if isinstance(v, GOAL_TYPES) else parse_goal_obj(v)

    @field_serializer("goal")
    def _dump_goal(self, goal: Any) -> dict:
        from models.goal_spec import goal_to_obj

        return goal_to_obj(goal)


class RolloutConfig(_Section):
    replan_interval: int = Field(16, ge=1, description="k")
    deviation_threshold: float = Field(0.5, gt=0.0, description="delta; may be inf")
    max_steps: int = Field(200, ge=0)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    executor_kind: Literal["pd", "learned"] = "pd"
    goal_schedule: list[GoalActivation] = Field(default_factory=list)
    start: tuple[float, float, float, float] = (0.5, 0.5, 0.0, 0.0)
    n_rollouts: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    model_config = ConfigDict(extra="forbid", allow_inf_nan=True)

    @model_validator(mode="after")
    def _schedule_order(self) -> RolloutConfig:
        steps = [entry.step for entry in self.goal_schedule]
        if steps and steps[0] != 0:
            raise ValueError("goal_schedule must start at step 0")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("goal_schedule activation steps must be strictly increasing")
        return self


class PathsConfig(_Section):
    """Artifact locations; checkpoint defaults follow DOG_PLANNER_CHECKPOINT and DOG_EXECUTOR_CHECKPOINT."""

    dataset: str = "dataset.ndjson"
    planner: str = Field(default_factory=lambda: config.PLANNER_CHECKPOINT)
    executor: str = Field(default_factory=lambda: config.EXECUTOR_CHECKPOINT)
    records: str = "records.ndjson"


class PipelineConfig(_Section):
    """Every tunable of the pipeline, with the desk-scale defaults."""

    maze: MazeSpec = Field(default_factory=MazeSpec)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    executor: ExecutorConfig = Field(default_factory=ExecutorConfig)
    rollout: RolloutConfig = Field(default_factory=RolloutConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)


def _set_dotted(tree: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ValueError(f"cannot set '{dotted}': '{key}' is not a section")
        node = child
    node[keys[-1]] = value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """
    Build the effective pipeline configuration.

    Args:
        path: Optional JSON file holding a (partial) config tree
        overrides: Dotted-path overrides applied on top, e.g. {"planner.steps": 500}

    Returns:
        Validated PipelineConfig
    """
    tree: dict = {}
    if path:
        text = Path(path).read_text(encoding="utf-8")
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(tree, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(tree, dotted, value)
    return PipelineConfig.model_validate(tree)
