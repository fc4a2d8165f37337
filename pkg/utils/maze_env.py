"""
Point-mass maze simulator, offline data generator and dataset I/O
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import config
from models.config_models import DatasetConfig, MazeSpec
from utils.numeric import RngStream

logger = logging.getLogger(__name__)

F32 = np.float32
CELL_MARGIN = 1e-3


@dataclass(frozen=True)
class EnvState:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy], dtype=F32)

    @classmethod
    def from_array(cls, arr) -> EnvState:
        arr = np.asarray(arr, dtype=F32)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


@dataclass(frozen=True)
class Action:
    ax: float
    ay: float

    def to_array(self) -> np.ndarray:
        return np.clip(np.array([self.ax, self.ay], dtype=F32), F32(-1.0), F32(1.0))

    @classmethod
    def from_array(cls, arr) -> Action:
        arr = np.clip(np.asarray(arr, dtype=F32), F32(-1.0), F32(1.0))
        return cls(float(arr[0]), float(arr[1]))


@dataclass
class TrajectoryDataset:
    """
    Offline episodes of equal length.

    states has shape (episodes, L, 4) and actions (episodes, L, 2), both float32;
    actions[e, t] is the action taken at states[e, t].
    """

    maze: MazeSpec
    states: np.ndarray
    actions: np.ndarray
    seed: int
    mean: np.ndarray
    std: np.ndarray

    @property
    def n_episodes(self) -> int:
        return int(self.states.shape[0])

    @property
    def episode_length(self) -> int:
        return int(self.states.shape[1])

    @property
    def n_states(self) -> int:
        return self.n_episodes * self.episode_length

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return ((np.asarray(x, dtype=F32) - self.mean) / self.std).astype(F32)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=F32) * self.std + self.mean).astype(F32)

    def subset(self, episodes) -> TrajectoryDataset:
        """Episodes as a new dataset that keeps these normalization statistics."""
        idx = np.asarray(episodes, dtype=np.int64)
        return TrajectoryDataset(self.maze, self.states[idx], self.actions[idx], self.seed, self.mean, self.std)


def split_episodes(dataset: TrajectoryDataset, fraction: float) -> tuple[TrajectoryDataset, TrajectoryDataset | None]:
    """Last `fraction` of the episodes as a held-out set; None when that would leave either side empty."""
    n_hold = int(dataset.n_episodes * fraction)
    if n_hold == 0 or n_hold >= dataset.n_episodes:
        return dataset, None
    n_train = dataset.n_episodes - n_hold
    return dataset.subset(range(n_train)), dataset.subset(range(n_train, dataset.n_episodes))


def state_statistics(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and population std, accumulated in float64."""
    flat = np.asarray(states, dtype=np.float64).reshape(-1, config.STATE_DIM)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean.astype(F32), std.astype(F32)


def blocked_grid(maze: MazeSpec) -> np.ndarray:
    grid = np.zeros((maze.width, maze.height), dtype=bool)
    for i, j in maze.blocked:
        grid[i, j] = True
    return grid


def _is_free(px: np.ndarray, py: np.ndarray, maze: MazeSpec, grid: np.ndarray) -> np.ndarray:
    inside = (px >= 0) & (px <= maze.width) & (py >= 0) & (py <= maze.height)
    ix = np.clip(np.floor(px).astype(np.int64), 0, maze.width - 1)
    iy = np.clip(np.floor(py).astype(np.int64), 0, maze.height - 1)
    return inside & ~grid[ix, iy]


def step_states(states: np.ndarray, actions: np.ndarray, maze: MazeSpec, grid: np.ndarray | None = None) -> np.ndarray:
    """
    Vectorized simulator step over arrays of shape (..., 4) and (..., 2).

    Semi-implicit Euler in float32; an axis whose move would leave the maze or
    enter a blocked cell keeps its position and loses its velocity.
    """
    if grid is None:
        grid = blocked_grid(maze)
    s = np.asarray(states, dtype=F32)
    a = np.clip(np.asarray(actions, dtype=F32), F32(-1.0), F32(1.0))
    dt = F32(maze.dt)
    v_max = F32(maze.v_max)

    vx = np.clip(s[..., 2] + a[..., 0] * dt, -v_max, v_max)
    vy = np.clip(s[..., 3] + a[..., 1] * dt, -v_max, v_max)
    x, y = s[..., 0], s[..., 1]

    new_x = x + vx * dt
    ok_x = _is_free(new_x, y, maze, grid)
    x = np.where(ok_x, new_x, x)
    vx = np.where(ok_x, vx, F32(0.0))

    new_y = y + vy * dt
    ok_y = _is_free(x, new_y, maze, grid)
    y = np.where(ok_y, new_y, y)
    vy = np.where(ok_y, vy, F32(0.0))

    return np.stack([x, y, vx, vy], axis=-1).astype(F32)


def step_env(state: EnvState, action: Action, maze: MazeSpec) -> EnvState:
    """
    Advance the point mass by one step.

    Args:
        state: Current state
        action: Acceleration, each component clipped to [-1, 1]
        maze: Maze geometry and integrator constants

    Returns:
        The next state
    """
    return EnvState.from_array(step_states(state.to_array(), action.to_array(), maze))


def _free_cells(maze: MazeSpec) -> list[tuple[int, int]]:
    blocked = set(maze.blocked)
    return [(i, j) for i in range(maze.width) for j in range(maze.height) if (i, j) not in blocked]


def sample_free_positions(maze: MazeSpec, rng: RngStream, count: int) -> np.ndarray:
    """Uniform positions over the free area: pick a free cell, then a point inside it."""
    cells = _free_cells(maze)
    if not cells:
        raise ValueError("maze has no free cell")
    cells_arr = np.array(cells, dtype=np.float64)
    picks = rng.integers(0, len(cells), count)
    # Margin keeps float32 rounding from landing on a neighbouring cell.
    offsets = rng.uniform(CELL_MARGIN, 1.0 - CELL_MARGIN, (count, 2))
    return (cells_arr[picks] + offsets).astype(F32)


def _generate_episodes(maze: MazeSpec, cfg: DatasetConfig, seed: int, episode_ids: range) -> tuple[np.ndarray, np.ndarray]:
    """Roll the waypoint-PD generator for a block of episodes in lockstep."""
    grid = blocked_grid(maze)
    count = len(episode_ids)
    length = cfg.episode_length
    streams = [RngStream(seed).fork(e) for e in episode_ids]

    starts = np.stack([sample_free_positions(maze, rng, 1)[0] for rng in streams])
    waypoints = np.stack([sample_free_positions(maze, rng, 1)[0] for rng in streams])

    states = np.zeros((count, length, config.STATE_DIM), dtype=F32)
    actions = np.zeros((count, length, config.ACTION_DIM), dtype=F32)
    current = np.concatenate([starts, np.zeros((count, 2), dtype=F32)], axis=1)
    kp, kd, radius = F32(cfg.kp), F32(cfg.kd), F32(cfg.waypoint_radius)

    for t in range(length):
        near = np.linalg.norm(waypoints - current[:, :2], axis=1) < radius
        for e in np.flatnonzero(near):
            waypoints[e] = sample_free_positions(maze, streams[e], 1)[0]
        act = np.clip(kp * (waypoints - current[:, :2]) - kd * current[:, 2:], F32(-1.0), F32(1.0))
        states[:, t] = current
        actions[:, t] = act
        current = step_states(current, act, maze, grid)
    return states, actions


def generate_dataset(maze: MazeSpec, n_steps: int, L: int, seed: int,
                     cfg: DatasetConfig | None = None) -> TrajectoryDataset:
    """
    Generate goal-free offline data with a waypoint-chasing PD policy.

    Args:
        maze: Maze to simulate
        n_steps: Minimum number of states in total
        L: Fixed episode length
        seed: Generator seed; episode e uses the stream derived from (seed, e)
        cfg: Generator gains / workers (defaults when omitted)

    Returns:
        TrajectoryDataset with ceil(n_steps / L) episodes and its statistics
    """
    if not n_steps >= L >= 2:
        raise ValueError(f"generate_dataset requires n_steps >= L >= 2, got n_steps={n_steps}, L={L}")
    if not _free_cells(maze):
        raise ValueError("generate_dataset: every maze cell is blocked")
    cfg = (cfg or DatasetConfig()).model_copy(update={"n_steps": n_steps, "episode_length": L, "seed": seed})

    n_episodes = math.ceil(n_steps / L)
    shard = math.ceil(n_episodes / cfg.workers)
    blocks = [range(lo, min(lo + shard, n_episodes)) for lo in range(0, n_episodes, shard)]
    logger.info("Generating %d episodes of %d steps (%d shard(s))", n_episodes, L, len(blocks))

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        parts = list(pool.map(lambda ids: _generate_episodes(maze, cfg, seed, ids), blocks))
    states = np.concatenate([p[0] for p in parts])
    actions = np.concatenate([p[1] for p in parts])
    mean, std = state_statistics(states)
    return TrajectoryDataset(maze=maze, states=states, actions=actions, seed=seed, mean=mean, std=std)


def replay_episode(dataset: TrajectoryDataset, episode: int) -> np.ndarray:
    """Re-simulate an episode from its first state using its recorded actions."""
    grid = blocked_grid(dataset.maze)
    states = np.empty_like(dataset.states[episode])
    states[0] = dataset.states[episode, 0]
    for t in range(1, dataset.episode_length):
        states[t] = step_states(states[t - 1], dataset.actions[episode, t - 1], dataset.maze, grid)
    return states


def slice_windows(dataset: TrajectoryDataset, H: int, normalized: bool = False) -> list[np.ndarray]:
    """
    All contiguous H-step state windows that stay inside one episode.

    Windows are views into the dataset arrays (or into one normalized copy).

    Args:
        dataset: Source episodes
        H: Window length, 2 <= H <= L
        normalized: Return windows in normalized coordinates

    Returns:
        List of (H, 4) arrays, episode-major, sum_episodes (L - H + 1) long
    """
    L = dataset.episode_length
    if H < 2:
        raise ValueError(f"window length H must be >= 2, got {H}")
    if H > L:
        raise ValueError(f"window length H={H} exceeds episode length L={L}")
    source = dataset.normalize(dataset.states) if normalized else dataset.states
    return [source[e, t:t + H] for e in range(dataset.n_episodes) for t in range(L - H + 1)]


def f32_list(arr: np.ndarray) -> list[float]:
    # Shortest decimal that round-trips each float32 value.
    return np.asarray(arr, dtype=F32).reshape(-1).astype(str).astype(np.float64).tolist()


def save_dataset(dataset: TrajectoryDataset, path: str | Path) -> None:
    """Write the NDJSON dataset: one metadata header line, then one line per episode."""
    header = {
        "schema": config.DATASET_SCHEMA,
        "maze": dataset.maze.model_dump(mode="json"),
        "episode_length": dataset.episode_length,
        "seed": dataset.seed,
        "mean": f32_list(dataset.mean),
        "std": f32_list(dataset.std),
        "count": dataset.n_episodes,
    }
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for e in range(dataset.n_episodes):
            line = {"states": f32_list(dataset.states[e]), "actions": f32_list(dataset.actions[e])}
            f.write(json.dumps(line, sort_keys=True) + "\n")
    logger.info("Wrote %d episodes to %s", dataset.n_episodes, path)


def load_dataset(path: str | Path) -> TrajectoryDataset:
    """Read a dataset written by save_dataset."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"dataset file {path} is empty")
    header = json.loads(lines[0])
    if header.get("schema") != config.DATASET_SCHEMA:
        raise ValueError(f"dataset file {path}: unsupported schema {header.get('schema')!r}")
    L = int(header["episode_length"])
    episodes = [json.loads(line) for line in lines[1:]]
    if len(episodes) != int(header["count"]):
        raise ValueError(f"dataset file {path}: header count {header['count']} but {len(episodes)} episodes")
    states = np.array([ep["states"] for ep in episodes], dtype=F32).reshape(-1, L, config.STATE_DIM)
    actions = np.array([ep["actions"] for ep in episodes], dtype=F32).reshape(-1, L, config.ACTION_DIM)
    return TrajectoryDataset(
        maze=MazeSpec.model_validate(header["maze"]),
        states=states,
        actions=actions,
        seed=int(header["seed"]),
        mean=np.array(header["mean"], dtype=F32),
        std=np.array(header["std"], dtype=F32),
    )
