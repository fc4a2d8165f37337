"""
Closed-loop plan-and-act agent, experiment metrics and rollout-record I/O
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel

import config
from models.config_models import MazeSpec, RolloutConfig
from models.goal_spec import GoalSpec, RegionAvoidGoal, StateGoal, goal_to_obj, iter_goals, parse_goal_obj
from utils.diffusion import DenoiserParams, NoiseSchedule, sample_unconditional
from utils.executor import Actor
from utils.goal_energy import eval_energy
from utils.guidance import sample_guided
from utils.maze_env import EnvState, blocked_grid, f32_list, step_states
from utils.numeric import derive_seed

logger = logging.getLogger(__name__)

F32 = np.float32


class RolloutError(RuntimeError):
    """A planner or executor failure inside the control loop, tagged with the env step."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (env step {step})")
        self.step = step


@dataclass
class PlanRecord:
    t_p: int
    goal_index: Optional[int]  # None for an unguided plan
    seed: int
    states: np.ndarray  # (H, 4)


@dataclass
class RolloutRecord:
    """
    One closed-loop episode.

    states has max_steps + 1 rows; actions, plan_ids and waypoint_index have
    one entry per env step. waypoint_index[t] = min(t - t_p, H - 1) for the
    plan active at t.
    """

    states: np.ndarray
    actions: np.ndarray
    plan_ids: np.ndarray
    waypoint_index: np.ndarray
    plans: list[PlanRecord]
    horizon: int
    seed: int
    goal_schedule: list[tuple[int, GoalSpec]] = field(default_factory=list)
    metrics: Optional[Metrics] = None

    @property
    def final_goal(self) -> GoalSpec | None:
        return self.goal_schedule[-1][1] if self.goal_schedule else None


class Metrics(BaseModel):
    final_energy: Optional[float] = None
    success: Optional[bool] = None
    path_length: float
    violation_fraction: float
    endpoint: tuple[float, float]


class MetricSummary(BaseModel):
    mean: Optional[float] = None
    std: Optional[float] = None


class EvaluationSummary(BaseModel):
    n_records: int
    success_rate: Optional[float] = None
    final_energy: MetricSummary
    path_length: MetricSummary
    violation_fraction: MetricSummary
    per_record: list[Metrics]


def _active_goal(cfg: RolloutConfig, t: int) -> int | None:
    index = None
    for i, entry in enumerate(cfg.goal_schedule):
        if entry.step <= t:
            index = i
    return index


def rollout(maze: MazeSpec, planner: DenoiserParams, actor: Actor, cfg: RolloutConfig, s0: EnvState, seed: int,
            sched: NoiseSchedule | None = None) -> RolloutRecord:
    """
    Run the replanning agent for cfg.max_steps env steps.

    A plan is (re)generated at t = 0, on a goal switch, when t - t_p >= k, or
    when the agent is more than delta away from the plan row it should be on.
    The executor always chases the next planned row.

    Args:
        maze: Environment geometry
        planner: Trained denoiser
        actor: (state, waypoint) -> action
        cfg: Replanning, guidance and goal-schedule settings
        s0: Initial state
        seed: Rollout seed; plan i samples with derive_seed(seed, i)
        sched: Noise schedule (rebuilt from the planner when omitted)

    Returns:
        RolloutRecord with metrics for the last scheduled goal
    """
    H = planner.arch.horizon
    k = cfg.replan_interval
    if not 1 <= k <= H:
        raise ValueError(f"replan_interval k={k} must lie in 1..H={H}")
    sched = sched or planner.make_schedule()
    grid = blocked_grid(maze)
    T = cfg.max_steps

    states = np.zeros((T + 1, config.STATE_DIM), dtype=F32)
    actions = np.zeros((T, config.ACTION_DIM), dtype=F32)
    plan_ids = np.zeros(T, dtype=np.int64)
    waypoint_index = np.zeros(T, dtype=np.int64)
    plans: list[PlanRecord] = []
    states[0] = s0.to_array()

    plan = None
    t_p = 0
    goal_index = None
    for t in range(T):
        current = EnvState.from_array(states[t])
        active = _active_goal(cfg, t)
        replan = plan is None or active != goal_index or t - t_p >= k
        if not replan:
            row = plan[min(t - t_p, H - 1)]
            replan = float(np.hypot(states[t, 0] - row[0], states[t, 1] - row[1])) > cfg.deviation_threshold
        if replan:
            goal_index = active
            plan_seed = derive_seed(seed, len(plans))
            try:
                if goal_index is None:
                    plan = sample_unconditional(planner, sched, current, H, plan_seed)
                else:
                    spec = cfg.goal_schedule[goal_index].goal
                    plan = sample_guided(planner, sched, spec, current, H, cfg.guidance, plan_seed)
            except (ValueError, RuntimeError) as e:
                raise RolloutError(f"planning failed: {e}", t) from e
            t_p = t
            plans.append(PlanRecord(t_p=t, goal_index=goal_index, seed=plan_seed, states=plan))
            logger.debug("plan %d at t=%d (goal %s)", len(plans) - 1, t, goal_index)

        target = EnvState.from_array(plan[min(t - t_p + 1, H - 1)])
        try:
            action = actor(current, target).to_array()
        except (ValueError, RuntimeError) as e:
            raise RolloutError(f"executor failed: {e}", t) from e
        actions[t] = action
        plan_ids[t] = len(plans) - 1
        waypoint_index[t] = min(t - t_p, H - 1)
        states[t + 1] = step_states(states[t], action, maze, grid)

    record = RolloutRecord(
        states=states,
        actions=actions,
        plan_ids=plan_ids,
        waypoint_index=waypoint_index,
        plans=plans,
        horizon=H,
        seed=seed,
        goal_schedule=[(entry.step, entry.goal) for entry in cfg.goal_schedule],
    )
    record.metrics = compute_metrics(record, record.final_goal)
    return record


def rollout_batch(maze: MazeSpec, planner: DenoiserParams, actor: Actor, cfg: RolloutConfig, seed: int,
                  n: int | None = None) -> list[RolloutRecord]:
    """n independent rollouts from cfg.start; rollout i uses derive_seed(seed, i)."""
    n = cfg.n_rollouts if n is None else n
    if n < 1:
        raise ValueError(f"rollout count must be >= 1, got {n}")
    sched = planner.make_schedule()
    s0 = EnvState(*cfg.start)
    logger.info("Running %d rollouts of %d steps (%d worker(s))", n, cfg.max_steps, cfg.workers)

    def one(i: int) -> RolloutRecord:
        return rollout(maze, planner, actor, cfg, s0, derive_seed(seed, i), sched=sched)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(one, range(n)))


def trailing_window(states: np.ndarray, H: int) -> np.ndarray:
    """Last H realized states, front-padded with the first state when the record is shorter."""
    states = np.asarray(states)
    if len(states) >= H:
        return states[-H:]
    pad = np.repeat(states[:1], H - len(states), axis=0)
    return np.concatenate([pad, states])


def compute_metrics(record: RolloutRecord, spec: GoalSpec | None) -> Metrics:
    states = np.asarray(record.states, dtype=np.float64)
    steps = np.diff(states[:, :2], axis=0)
    path_length = float(np.sum(np.sqrt(np.sum(steps * steps, axis=1))))
    endpoint = (float(states[-1, 0]), float(states[-1, 1]))

    final_energy = None
    success = None
    inside = np.zeros(len(states), dtype=bool)
    if spec is not None:
        final_energy = eval_energy(spec, trailing_window(states, record.horizon))
        leaves = [leaf for _, leaf in iter_goals(spec)]
        target = next((leaf for leaf in leaves if isinstance(leaf, StateGoal)), None)
        if target is not None:
            success = bool(np.hypot(endpoint[0] - target.x, endpoint[1] - target.y) <= config.SUCCESS_RADIUS)
        for leaf in leaves:
            if isinstance(leaf, RegionAvoidGoal):
                inside |= np.hypot(states[:, 0] - leaf.x, states[:, 1] - leaf.y) < leaf.sigma

    return Metrics(
        final_energy=final_energy,
        success=success,
        path_length=path_length,
        violation_fraction=float(inside.mean()),
        endpoint=endpoint,
    )


def _summary(values: list[float | None]) -> MetricSummary:
    present = [v for v in values if v is not None]
    if not present:
        return MetricSummary()
    return MetricSummary(mean=float(np.mean(present)), std=float(np.std(present)))


def evaluate(records: list[RolloutRecord], spec: GoalSpec | None) -> EvaluationSummary:
    """
    Per-record metrics plus means and stds across records.

    Args:
        records: Non-empty list of rollouts
        spec: Goal the metrics are measured against

    Returns:
        EvaluationSummary; success_rate is None when the goal has no state target
    """
    if not records:
        raise ValueError("evaluate needs at least one record")
    per_record = [compute_metrics(record, spec) for record in records]
    outcomes = [m.success for m in per_record if m.success is not None]
    return EvaluationSummary(
        n_records=len(records),
        success_rate=float(np.mean(outcomes)) if outcomes else None,
        final_energy=_summary([m.final_energy for m in per_record]),
        path_length=_summary([m.path_length for m in per_record]),
        violation_fraction=_summary([m.violation_fraction for m in per_record]),
        per_record=per_record,
    )


def _matrix(values: list[float], width: int) -> list[list[float]]:
    return np.asarray(values, dtype=np.float64).reshape(-1, width).tolist()


def record_to_obj(record: RolloutRecord) -> dict:
    return {
        "schema": config.RECORD_SCHEMA,
        "seed": record.seed,
        "horizon": record.horizon,
        "states": _matrix(f32_list(record.states), config.STATE_DIM),
        "actions": _matrix(f32_list(record.actions), config.ACTION_DIM),
        "plan_ids": record.plan_ids.tolist(),
        "waypoint_index": record.waypoint_index.tolist(),
        "plans": [
            {"t_p": p.t_p, "goal_index": p.goal_index, "seed": p.seed,
             "states": _matrix(f32_list(p.states), config.STATE_DIM)}
            for p in record.plans
        ],
        "goal_schedule": [{"step": step, "goal": goal_to_obj(goal)} for step, goal in record.goal_schedule],
        "metrics": record.metrics.model_dump(mode="json") if record.metrics else None,
    }


def record_from_obj(obj: dict) -> RolloutRecord:
    if obj.get("schema") != config.RECORD_SCHEMA:
        raise ValueError(f"unsupported rollout record schema {obj.get('schema')!r}")
    plans = [
        PlanRecord(t_p=p["t_p"], goal_index=p["goal_index"], seed=p["seed"],
                   states=np.array(p["states"], dtype=F32).reshape(-1, config.STATE_DIM))
        for p in obj["plans"]
    ]
    return RolloutRecord(
        states=np.array(obj["states"], dtype=F32).reshape(-1, config.STATE_DIM),
        actions=np.array(obj["actions"], dtype=F32).reshape(-1, config.ACTION_DIM),
        plan_ids=np.array(obj["plan_ids"], dtype=np.int64),
        waypoint_index=np.array(obj["waypoint_index"], dtype=np.int64),
        plans=plans,
        horizon=int(obj["horizon"]),
        seed=int(obj["seed"]),
        goal_schedule=[(int(e["step"]), parse_goal_obj(e["goal"])) for e in obj["goal_schedule"]],
        metrics=Metrics.model_validate(obj["metrics"]) if obj.get("metrics") else None,
    )


def save_records(records: list[RolloutRecord], path: str | Path) -> None:
    """NDJSON, one rollout per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record_to_obj(record), sort_keys=True) + "\n")
    logger.info("Wrote %d rollout records to %s", len(records), path)


def load_records(path: str | Path) -> list[RolloutRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_obj(json.loads(line)))
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise ValueError(f"{path}:{lineno}: malformed rollout record ({e})") from e
    return records
