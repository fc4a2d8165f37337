"""
Shared goal-conditioned planning front end for the CLI and the HTTP service
"""
from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import config
from models.config_models import GuidanceConfig
from models.goal_spec import GoalSpec, goal_to_obj
from utils.diffusion import DenoiserParams, NoiseSchedule, load_planner
from utils.goal_energy import GoalEval, eval_energy, eval_grad
from utils.guidance import sample_guided
from utils.maze_env import EnvState, f32_list

logger = logging.getLogger(__name__)


class PlannerUnavailableError(RuntimeError):
    """The planner checkpoint could not be found or loaded."""


@dataclass(frozen=True)
class PlanResult:
    states: np.ndarray
    energy: float
    seed: int
    start: EnvState
    goal: GoalSpec

    @property
    def horizon(self) -> int:
        return int(self.states.shape[0])


class PlanService:
    """
    Lazily loads one planner checkpoint and serves guided plan windows.

    The loaded parameters are read-only, so concurrent plan() calls are safe.
    """

    def __init__(self, checkpoint_path: str | Path | None = None, planner: DenoiserParams | None = None):
        self.checkpoint_path = Path(checkpoint_path or config.PLANNER_CHECKPOINT)
        self._planner = planner
        self._sched: NoiseSchedule | None = planner.make_schedule() if planner else None
        self._lock = threading.Lock()

    @property
    def planner_loaded(self) -> bool:
        return self._planner is not None

    def load(self) -> DenoiserParams:
        with self._lock:
            if self._planner is None:
                if not self.checkpoint_path.exists():
                    raise PlannerUnavailableError(f"planner checkpoint not found: {self.checkpoint_path}")
                try:
                    self._planner = load_planner(self.checkpoint_path)
                except ValueError as e:
                    raise PlannerUnavailableError(f"cannot load planner from {self.checkpoint_path}: {e}") from e
                self._sched = self._planner.make_schedule()
                logger.info("Loaded planner from %s (H=%d)", self.checkpoint_path, self._planner.arch.horizon)
            return self._planner

    def plan(self, goal: GoalSpec, start: EnvState, seed: int, guidance: GuidanceConfig | None = None) -> PlanResult:
        """
        One guided plan window from `start`.

        Args:
            goal: Goal to steer towards
            start: Current state (row 0 of the plan)
            seed: Sampling seed
            guidance: Guidance settings (defaults when omitted)

        Returns:
            PlanResult with the (H, 4) window and its goal energy
        """
        planner = self.load()
        guidance = guidance or GuidanceConfig()
        states = sample_guided(planner, self._sched, goal, start, planner.arch.horizon, guidance, seed)
        return PlanResult(states=states, energy=eval_energy(goal, states), seed=seed, start=start, goal=goal)

    @staticmethod
    def energy(goal: GoalSpec, states) -> GoalEval:
        return eval_grad(goal, states)


def save_plan(result: PlanResult, path: str | Path) -> None:
    """Write one plan window as a single NDJSON line."""
    line = {
        "schema": config.PLAN_SCHEMA,
        "goal": goal_to_obj(result.goal),
        "seed": result.seed,
        "start": f32_list(result.start.to_array()),
        "horizon": result.horizon,
        "states": np.asarray(f32_list(result.states)).reshape(-1, config.STATE_DIM).tolist(),
        "energy": result.energy,
    }
    path = Path(path)
    path.write_text(json.dumps(line, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %d-step plan to %s", result.horizon, path)
