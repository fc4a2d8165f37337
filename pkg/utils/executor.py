"""
Waypoint executors: HER-trained actor and PD tracker
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from tqdm import tqdm

import config
from models.config_models import ExecutorConfig, MazeSpec
from utils.checkpoint import read_checkpoint, write_checkpoint
from utils.maze_env import Action, EnvState, TrajectoryDataset, f32_list, state_statistics, step_states
from utils.networks import MLP, AdamOptimizer, MLPArch
from utils.numeric import NumericalError, RngStream

logger = logging.getLogger(__name__)

F32 = np.float32

Actor = Callable[[EnvState, EnvState], Action]


@dataclass(frozen=True)
class HerTuple:
    s: EnvState
    a: Action
    s_target: EnvState
    offset: int
    episode: int
    index: int


@dataclass
class ExecutorParams:
    arch: MLPArch
    weights: dict[str, np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    train_config: dict = field(default_factory=dict)
    loss_log: list[list[float]] = field(default_factory=list)

    def network(self) -> MLP:
        return MLP(self.arch, self.weights)

    def features(self, s: np.ndarray, target: np.ndarray) -> np.ndarray:
        s = (np.asarray(s, dtype=F32) - self.mean) / self.std
        target = (np.asarray(target, dtype=F32) - self.mean) / self.std
        return np.concatenate([s, target], axis=-1).astype(F32)


def sample_her_tuples(dataset: TrajectoryDataset, T_a: int, count: int, seed: int) -> list[HerTuple]:
    """
    Hindsight tuples (s, a, s') with s' drawn 1..T_a steps after s in the same episode.

    Args:
        dataset: Offline episodes
        T_a: Maximum offset (1 <= T_a < L)
        count: Number of tuples
        seed: Sampling seed

    Returns:
        List of HerTuple; offsets uniform on {1..T_a}
    """
    if dataset.n_episodes == 0:
        raise ValueError("sample_her_tuples: dataset is empty")
    L = dataset.episode_length
    if not 1 <= T_a < L:
        raise ValueError(f"sample_her_tuples requires 1 <= T_a < L, got T_a={T_a}, L={L}")
    rng = RngStream(seed)
    episodes = rng.integers(0, dataset.n_episodes, count)
    offsets = rng.integers(1, T_a + 1, count)
    anchors = rng.integers(0, L - offsets)
    tuples = []
    for e, t, k in zip(episodes.tolist(), anchors.tolist(), offsets.tolist()):
        tuples.append(HerTuple(
            s=EnvState.from_array(dataset.states[e, t]),
            a=Action.from_array(dataset.actions[e, t]),
            s_target=EnvState.from_array(dataset.states[e, t + k]),
            offset=k,
            episode=e,
            index=t,
        ))
    return tuples


def _tuple_arrays(tuples: list[HerTuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = np.array([[t.s.x, t.s.y, t.s.vx, t.s.vy] for t in tuples], dtype=F32)
    target = np.array([[t.s_target.x, t.s_target.y, t.s_target.vx, t.s_target.vy] for t in tuples], dtype=F32)
    a = np.array([[t.a.ax, t.a.ay] for t in tuples], dtype=F32)
    return s, target, a


def executor_mse(params: ExecutorParams, tuples: list[HerTuple]) -> float:
    """Per-entry squared error of the raw network output against the recorded actions."""
    s, target, a = _tuple_arrays(tuples)
    pred = params.network().predict(params.features(s, target))
    return float(np.mean(np.square(pred - a, dtype=np.float64)))


def init_executor(tuples: list[HerTuple], cfg: ExecutorConfig) -> ExecutorParams:
    """Untrained actor with input statistics taken from the tuples."""
    if not tuples:
        raise ValueError("executor needs at least one tuple")
    s, target, _ = _tuple_arrays(tuples)
    mean, std = state_statistics(np.concatenate([s, target]))
    arch = MLPArch(2 * config.STATE_DIM, tuple(cfg.hidden), config.ACTION_DIM)
    net = MLP.initialize(arch, RngStream(cfg.seed).fork(0))
    return ExecutorParams(arch=arch, weights=net.weights, mean=mean, std=std, train_config=cfg.model_dump(mode="json"))


def train_executor(tuples: list[HerTuple], cfg: ExecutorConfig) -> ExecutorParams:
    """
    Regress the recorded action from (s, s') by mean squared error.

    Args:
        tuples: HER tuples
        cfg: Architecture and optimizer settings

    Returns:
        Trained ExecutorParams; loss_log holds [step, running loss] pairs
    """
    params = init_executor(tuples, cfg)
    s, target, a = _tuple_arrays(tuples)
    features = params.features(s, target)
    net = params.network()
    optimizer = AdamOptimizer(net.weights, lr=cfg.lr)
    rng = RngStream(cfg.seed).fork(1)
    batch = min(cfg.batch, len(tuples))
    logger.info("Training executor on %d tuples for %d steps", len(tuples), cfg.steps)

    running = None
    for step in tqdm(range(cfg.steps), desc="executor", disable=not cfg.progress):
        idx = rng.integers(0, len(tuples), batch)
        pred, cache = net.forward(features[idx])
        err = pred - a[idx]
        loss = float(np.mean(np.square(err, dtype=np.float64)))
        if not np.isfinite(loss):
            raise NumericalError("executor training loss is not finite", step=step)
        optimizer.step(net.weights, net.backward(cache, (2.0 / err.size) * err))
        running = loss if running is None else 0.98 * running + 0.02 * loss
        if step == 0 or (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1:
            params.loss_log.append([step, running])

    params.weights = net.weights
    logger.info("Executor running loss %.5f -> %.5f", params.loss_log[0][1], params.loss_log[-1][1])
    return params


def act_learned(params: ExecutorParams, s: EnvState, target: EnvState, net: MLP | None = None) -> Action:
    """Network action for reaching `target` from `s`, clipped to the action box."""
    net = net or params.network()
    out = net.predict(params.features(s.to_array(), target.to_array())[None, :])[0]
    return Action.from_array(out)


def act_pd(s: EnvState, target: EnvState, kp: float = 4.0, kd: float = 4.0) -> Action:
    """
    Closed-form tracker: clip(kp (p* - p) + kd (v* - v)).

    Args:
        s: Current state
        target: Waypoint state
        kp: Position gain (> 0)
        kd: Velocity gain (> 0)

    Returns:
        Action in [-1, 1]^2
    """
    if kp <= 0 or kd <= 0:
        raise ValueError(f"PD gains must be positive, got kp={kp}, kd={kd}")
    ax = kp * (target.x - s.x) + kd * (target.vx - s.vx)
    ay = kp * (target.y - s.y) + kd * (target.vy - s.vy)
    return Action.from_array([ax, ay])


def make_actor(kind: str, cfg: ExecutorConfig, params: ExecutorParams | None = None) -> Actor:
    """Bind an executor kind ("pd" or "learned") to a (state, waypoint) -> action callable."""
    if kind == "pd":
        return lambda s, target: act_pd(s, target, cfg.kp, cfg.kd)
    if kind == "learned":
        if params is None:
            raise ValueError("the learned executor needs trained ExecutorParams")
        net = params.network()
        return lambda s, target: act_learned(params, s, target, net=net)
    raise ValueError(f"unknown executor kind {kind!r} (expected 'pd' or 'learned')")


def waypoint_reach_rate(maze: MazeSpec, tuples: list[HerTuple], actor: Actor, T_a: int, tol: float = 0.2) -> float:
    """
    Fraction of tuples whose target position is reached within tol in at most 2 * T_a steps.

    Each rollout starts from the tuple's s and chases its fixed s_target.
    """
    if not tuples:
        raise ValueError("waypoint_reach_rate needs at least one tuple")
    reached = 0
    for item in tuples:
        state = item.s.to_array()
        for _ in range(2 * T_a):
            action = actor(EnvState.from_array(state), item.s_target)
            state = step_states(state, action.to_array(), maze)
            if np.hypot(state[0] - item.s_target.x, state[1] - item.s_target.y) <= tol:
                reached += 1
                break
    return reached / len(tuples)


def save_executor(params: ExecutorParams, path: str | Path) -> None:
    metadata = {
        "arch": {"in_dim": params.arch.in_dim, "hidden": list(params.arch.hidden), "out_dim": params.arch.out_dim},
        "mean": f32_list(params.mean),
        "std": f32_list(params.std),
        "train_config": params.train_config,
        "loss_log": params.loss_log,
    }
    write_checkpoint(path, "executor", metadata, params.weights)
    logger.info("Saved executor checkpoint to %s", path)


def load_executor(path: str | Path) -> ExecutorParams:
    metadata, weights = read_checkpoint(path, component="executor")
    arch_meta = metadata["arch"]
    arch = MLPArch(arch_meta["in_dim"], tuple(arch_meta["hidden"]), arch_meta["out_dim"])
    MLP(arch, weights)
    return ExecutorParams(
        arch=arch,
        weights=weights,
        mean=np.array(metadata["mean"], dtype=F32),
        std=np.array(metadata["std"], dtype=F32),
        train_config=metadata.get("train_config", {}),
        loss_log=metadata.get("loss_log", []),
    )
