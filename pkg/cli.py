"""
Command-line interface for the diffusion open-ended goal planner.

Examples:
  python cli.py gen-data --n-steps 200000 --seed 0
  python cli.py train-planner --steps 20000
  python cli.py train-executor --reach-pairs 500
  python cli.py plan --goal '{"state":{"x":4.5,"y":4.5}}' --out plan.ndjson
  python cli.py rollout --goal '{"state":{"x":4.5,"y":4.5}}' --n 100 --seed 1 --svg rollouts.svg
  python cli.py eval --records records.ndjson
  python cli.py render --records records.ndjson --out rollouts.svg
  python cli.py show-config --set planner.horizon=32

Notes:
  - Every subcommand reads the JSON pipeline config (--config, or DOG_CONFIG from .env) and applies
    named flags and --set a.b=value overrides on top.
  - --goal accepts inline JSON, @file or a path to a JSON file.
  - Logs go to stderr; machine-readable results go to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

import config
from models.config_models import PipelineConfig, load_config
from models.goal_spec import GoalSpec, goal_to_obj, parse_goal_spec
from utils.diffusion import load_planner, make_schedule, save_planner, train_planner
from utils.executor import (
    load_executor,
    make_actor,
    sample_her_tuples,
    save_executor,
    train_executor,
    waypoint_reach_rate,
)
from utils.maze_env import EnvState, generate_dataset, load_dataset, save_dataset, split_episodes
from utils.numeric import NumericalError, derive_seed
from utils.plan_service import PlanService, save_plan
from utils.render import render_svg
from utils.rollout import evaluate, load_records, rollout_batch, save_records

logger = logging.getLogger("dog.cli")

# (argparse dest, dotted config path) for named flags that override config fields
FLAG_OVERRIDES: dict[str, list[tuple[str, str]]] = {
    "gen-data": [
        ("n_steps", "dataset.n_steps"), ("episode_length", "dataset.episode_length"),
        ("seed", "dataset.seed"), ("workers", "dataset.workers"), ("out", "paths.dataset"),
    ],
    "train-planner": [
        ("data", "paths.dataset"), ("out", "paths.planner"), ("steps", "planner.steps"),
        ("horizon", "planner.horizon"), ("seed", "planner.seed"),
    ],
    "train-executor": [
        ("data", "paths.dataset"), ("out", "paths.executor"), ("steps", "executor.steps"),
        ("tuples", "executor.n_tuples"), ("max_offset", "executor.max_offset"), ("seed", "executor.seed"),
    ],
    "plan": [
        ("planner", "paths.planner"), ("eta", "rollout.guidance.eta"),
    ],
    "rollout": [
        ("planner", "paths.planner"), ("executor_ckpt", "paths.executor"), ("out", "paths.records"),
        ("n", "rollout.n_rollouts"), ("seed", "rollout.seed"), ("executor", "rollout.executor_kind"),
        ("eta", "rollout.guidance.eta"), ("max_steps", "rollout.max_steps"), ("workers", "rollout.workers"),
    ],
    "eval": [("records", "paths.records")],
    "render": [("records", "paths.records")],
    "show-config": [],
}


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _parse_set(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ValueError(f"--set expects key=value, got '{item}'")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def read_goal(arg: str) -> GoalSpec:
    """Goal from inline JSON, '@file' or a path to a JSON file."""
    text = arg
    if arg.startswith("@"):
        text = Path(arg[1:]).read_text(encoding="utf-8")
    elif not arg.lstrip().startswith("{") and Path(arg).is_file():
        text = Path(arg).read_text(encoding="utf-8")
    return parse_goal_spec(text)


def _effective_config(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, Any] = {}
    for dest, dotted in FLAG_OVERRIDES.get(args.command, []):
        value = getattr(args, dest, None)
        if value is not None:
            overrides[dotted] = value
    if getattr(args, "no_progress", False):
        overrides["planner.progress"] = False
        overrides["executor.progress"] = False
    goal = getattr(args, "goal_spec", None)
    if goal is not None and args.command == "rollout":
        overrides["rollout.goal_schedule"] = [{"step": 0, "goal": goal}]
    for item in args.set or []:
        key, value = _parse_set(item)
        overrides[key] = value
    return load_config(args.config or config.DEFAULT_CONFIG_PATH or None, overrides)


def cmd_gen_data(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    d = cfg.dataset
    dataset = generate_dataset(cfg.maze, d.n_steps, d.episode_length, d.seed, d)
    save_dataset(dataset, cfg.paths.dataset)
    _print_json({"out": cfg.paths.dataset, "episodes": dataset.n_episodes, "states": dataset.n_states})
    return 0


def cmd_train_planner(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    p = cfg.planner
    dataset = load_dataset(cfg.paths.dataset)
    sched = make_schedule(p.diffusion_steps, p.beta_min, p.beta_max)
    params = train_planner(dataset, sched, p)
    save_planner(params, cfg.paths.planner)
    _print_json({
        "out": cfg.paths.planner,
        "final_loss": params.loss_log[-1][1],
        "heldout_loss": params.heldout_loss,
    })
    return 0


def cmd_train_executor(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    e = cfg.executor
    dataset = load_dataset(cfg.paths.dataset)
    train_set, heldout_set = split_episodes(dataset, e.holdout_fraction) if args.reach_pairs else (dataset, None)
    if args.reach_pairs and heldout_set is None:
        raise ValueError(f"--reach-pairs needs held-out episodes, but {dataset.n_episodes} episodes with "
                         f"executor.holdout_fraction={e.holdout_fraction} leave none")
    tuples = sample_her_tuples(train_set, e.max_offset, e.n_tuples, e.seed)
    params = train_executor(tuples, e)
    save_executor(params, cfg.paths.executor)
    result: dict[str, Any] = {"out": cfg.paths.executor, "final_loss": params.loss_log[-1][1]}
    if args.reach_pairs:
        logger.info("Measuring reach rates on %d held-out episodes", heldout_set.n_episodes)
        result["heldout_episodes"] = heldout_set.n_episodes
        probe = sample_her_tuples(heldout_set, e.max_offset, args.reach_pairs, derive_seed(e.seed, 1))
        for kind in ("pd", "learned"):
            actor = make_actor(kind, e, params)
            result[f"reach_rate_{kind}"] = waypoint_reach_rate(dataset.maze, probe, actor, e.max_offset)
    _print_json(result)
    return 0


def _parse_start(text: str | None, default: tuple[float, ...]) -> EnvState:
    if text is None:
        return EnvState(*default)
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ValueError(f"--start expects comma-separated numbers, got '{text}'") from e
    if len(values) not in (2, 4):
        raise ValueError(f"--start expects x,y or x,y,vx,vy, got {len(values)} values")
    return EnvState(*values)


def cmd_plan(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    service = PlanService(cfg.paths.planner)
    start = _parse_start(args.start, cfg.rollout.start)
    result = service.plan(args.goal_spec, start, args.seed, cfg.rollout.guidance)
    save_plan(result, args.out)
    _print_json({"out": args.out, "horizon": result.horizon, "energy": result.energy})
    return 0


def cmd_rollout(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    r = cfg.rollout
    planner = load_planner(cfg.paths.planner)
    params = load_executor(cfg.paths.executor) if r.executor_kind == "learned" else None
    actor = make_actor(r.executor_kind, cfg.executor, params)
    records = rollout_batch(cfg.maze, planner, actor, r, r.seed)
    save_records(records, cfg.paths.records)
    if args.svg:
        render_svg(cfg.maze, records, args.svg)
    goal = r.goal_schedule[-1].goal if r.goal_schedule else None
    summary = evaluate(records, goal)
    _print_json(summary.model_dump(mode="json", exclude={"per_record"}))
    return 0


def cmd_eval(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    records = load_records(cfg.paths.records)
    if not records:
        raise ValueError(f"no rollout records in {cfg.paths.records}")
    goal = args.goal_spec if args.goal_spec is not None else records[0].final_goal
    summary = evaluate(records, goal)
    payload = summary.model_dump(mode="json", exclude=None if args.per_record else {"per_record"})
    payload["goal"] = goal_to_obj(goal) if goal is not None else None
    _print_json(payload)
    return 0


def cmd_render(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    records = load_records(cfg.paths.records)
    render_svg(cfg.maze, records, args.out)
    _print_json({"out": args.out, "trajectories": len(records)})
    return 0


def cmd_show_config(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    if args.schema:
        _print_json(PipelineConfig.model_json_schema())
    else:
        _print_json(cfg.model_dump(mode="json"))
    return 0


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-planner": cmd_train_planner,
    "train-executor": cmd_train_executor,
    "plan": cmd_plan,
    "rollout": cmd_rollout,
    "eval": cmd_eval,
    "render": cmd_render,
    "show-config": cmd_show_config,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Pipeline config JSON (default: DOG_CONFIG from .env).")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="Override any config field by dotted path, e.g. --set planner.steps=500.")
    common.add_argument("--log-level", default=None, help=f"Logging level (default: {config.LOG_LEVEL}).")
    common.add_argument("--no-progress", action="store_true", help="Disable training progress bars.")

    parser = argparse.ArgumentParser(
        prog="cli.py",
        description="Diffusion open-ended goal planner: data, training, planning, rollouts and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="Generate the offline maze dataset.")
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--episode-length", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="Dataset NDJSON path.")

    p = sub.add_parser("train-planner", parents=[common], help="Train the trajectory diffusion model.")
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None, help="Planner checkpoint path.")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train-executor", parents=[common], help="Train the HER waypoint executor.")
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None, help="Executor checkpoint path.")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--tuples", type=int, default=None)
    p.add_argument("--max-offset", type=int, default=None, help="T_a")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reach-pairs", type=int, default=0, help="Report waypoint-reach rates on this many pairs.")

    p = sub.add_parser("plan", parents=[common], help="Sample one guided plan window to a file.")
    p.add_argument("--goal", required=True, help="Goal spec: inline JSON, @file or a file path.")
    p.add_argument("--out", default="plan.ndjson")
    p.add_argument("--start", default=None, help="x,y or x,y,vx,vy (default: rollout.start).")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--planner", default=None)
    p.add_argument("--eta", type=float, default=None)

    p = sub.add_parser("rollout", parents=[common], help="Run closed-loop rollouts and report metrics.")
    p.add_argument("--goal", default=None, help="Goal spec active from step 0 (default: config goal_schedule).")
    p.add_argument("--n", type=int, default=None, help="Number of rollouts.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--executor", choices=["pd", "learned"], default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--planner", default=None)
    p.add_argument("--executor-ckpt", default=None)
    p.add_argument("--out", default=None, help="Rollout records NDJSON path.")
    p.add_argument("--svg", default=None, help="Also render the rollouts to this SVG file.")

    p = sub.add_parser("eval", parents=[common], help="Recompute metrics from rollout records.")
    p.add_argument("--records", default=None)
    p.add_argument("--goal", default=None, help="Goal to evaluate against (default: the records' final goal).")
    p.add_argument("--per-record", action="store_true")

    p = sub.add_parser("render", parents=[common], help="Render rollout records to SVG.")
    p.add_argument("--records", default=None)
    p.add_argument("--out", default="rollouts.svg")

    p = sub.add_parser("show-config", parents=[common], help="Print the effective config or its JSON schema.")
    p.add_argument("--schema", action="store_true")

    return parser


def _validation_message(e: ValidationError) -> str:
    lines = []
    for err in e.errors():
        where = ".".join(str(part) for part in err["loc"]) or "config"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def run_cli(argv: Sequence[str] | None = None) -> int:
    """
    Parse argv and run one subcommand.

    Returns:
        0 on success, 1 on a pipeline error, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = (args.log_level or config.LOG_LEVEL).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"error: --log-level: unknown level '{level}'", file=sys.stderr)
        return 2
    logging.basicConfig(level=level, format=config.LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)

    try:
        args.goal_spec = read_goal(args.goal) if getattr(args, "goal", None) else None
        cfg = _effective_config(args)
        return HANDLERS[args.command](cfg, args)
    except ValidationError as e:
        print(f"error: {_validation_message(e)}", file=sys.stderr)
    except NumericalError as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
    return 1


def main() -> int:
    return run_cli()


if __name__ == "__main__":
    raise SystemExit(main())
