"""
Tests for the point-mass maze, the offline generator and dataset I/O
"""
import numpy as np
import pytest

from models.config_models import DatasetConfig, MazeSpec
from utils.maze_env import (
    Action,
    EnvState,
    blocked_grid,
    generate_dataset,
    load_dataset,
    replay_episode,
    sample_free_positions,
    save_dataset,
    slice_windows,
    split_episodes,
    step_env,
    step_states,
)
from utils.numeric import RngStream

WALLED = MazeSpec(width=5, height=5, blocked=[(1, 0), (2, 2), (3, 2)])


def test_free_step_integrates_semi_implicit_euler(open_maze):
    nxt = step_env(EnvState(1.0, 1.0), Action(1.0, 0.0), open_maze)
    assert nxt.vx == pytest.approx(0.1, abs=1e-6)
    assert nxt.x == pytest.approx(1.01, abs=1e-6)
    assert nxt.y == pytest.approx(1.0, abs=1e-6)
    assert nxt.vy == 0.0


def test_speed_is_clipped_per_axis(open_maze):
    nxt = step_env(EnvState(2.0, 2.0, 1.0, -1.0), Action(1.0, -1.0), open_maze)
    assert nxt.vx == pytest.approx(1.0)
    assert nxt.vy == pytest.approx(-1.0)


def test_actions_are_clipped(open_maze):
    s = EnvState(2.0, 2.0)
    assert step_env(s, Action(5.0, -7.0), open_maze) == step_env(s, Action(1.0, -1.0), open_maze)


def test_outer_wall_stops_motion_on_that_axis(open_maze):
    nxt = step_env(EnvState(0.005, 2.0, -0.1, 0.2), Action(-1.0, 0.0), open_maze)
    assert nxt.x == pytest.approx(0.005, abs=1e-7)
    assert nxt.vx == 0.0
    assert nxt.y == pytest.approx(2.02, abs=1e-6)


def test_blocked_cell_stops_motion():
    nxt = step_env(EnvState(0.99, 0.5, 1.0, 0.0), Action(0.0, 0.0), WALLED)
    assert nxt.x == pytest.approx(0.99, abs=1e-6)
    assert nxt.vx == 0.0


def test_step_states_is_vectorized(open_maze):
    states = np.array([[1.0, 1.0, 0.0, 0.0], [3.0, 3.0, 0.5, 0.5]], dtype=np.float32)
    actions = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.float32)
    batch = step_states(states, actions, open_maze)
    for i in range(2):
        assert np.array_equal(batch[i], step_states(states[i], actions[i], open_maze))


def test_free_positions_avoid_blocked_cells():
    grid = blocked_grid(WALLED)
    points = sample_free_positions(WALLED, RngStream(0), 2000)
    cells = np.floor(points).astype(int)
    assert not grid[cells[:, 0], cells[:, 1]].any()


def test_dataset_shape_and_episode_count(open_maze):
    dataset = generate_dataset(open_maze, n_steps=1050, L=100, seed=3)
    assert dataset.states.shape == (11, 100, 4)
    assert dataset.actions.shape == (11, 100, 2)
    assert dataset.states.dtype == np.float32


def test_dataset_is_deterministic_and_independent_of_workers(open_maze):
    a = generate_dataset(open_maze, n_steps=600, L=100, seed=9)
    b = generate_dataset(open_maze, n_steps=600, L=100, seed=9, cfg=DatasetConfig(workers=3))
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.actions, b.actions)
    c = generate_dataset(open_maze, n_steps=600, L=100, seed=10)
    assert not np.array_equal(a.states, c.states)


def test_dataset_respects_simulator_invariants():
    dataset = generate_dataset(WALLED, n_steps=2000, L=200, seed=1)
    pos = dataset.states[..., :2].reshape(-1, 2)
    assert (pos >= 0).all() and (pos[:, 0] <= WALLED.width).all() and (pos[:, 1] <= WALLED.height).all()
    cells = np.clip(np.floor(pos).astype(int), 0, 4)
    assert not blocked_grid(WALLED)[cells[:, 0], cells[:, 1]].any()
    assert np.abs(dataset.states[..., 2:]).max() <= WALLED.v_max
    assert np.abs(dataset.actions).max() <= 1.0


def test_exact_multiple_of_episode_length_gives_one_episode(open_maze):
    dataset = generate_dataset(open_maze, n_steps=400, L=400, seed=2)
    assert dataset.n_episodes == 1
    assert dataset.states.shape == (1, 400, 4)


def test_episode_endpoints_cover_every_quadrant():
    dataset = generate_dataset(WALLED, n_steps=20_000, L=100, seed=4)
    ends = dataset.states[:, -1, :2]
    quadrants = {int(x >= 2.5) + 2 * int(y >= 2.5) for x, y in ends}
    assert quadrants == {0, 1, 2, 3}


def test_replay_reproduces_recorded_states(tiny_dataset):
    for e in (0, tiny_dataset.n_episodes - 1):
        assert np.array_equal(replay_episode(tiny_dataset, e), tiny_dataset.states[e])


def test_dataset_moves_around(tiny_dataset):
    pos = tiny_dataset.states[..., :2].reshape(-1, 2)
    assert pos[:, 0].std() > 0.5 and pos[:, 1].std() > 0.5


def test_normalized_states_are_standardized():
    dataset = generate_dataset(WALLED, n_steps=4000, L=200, seed=5)
    flat = dataset.normalize(dataset.states).reshape(-1, 4).astype(np.float64)
    assert np.allclose(flat.mean(axis=0), 0.0, atol=1e-5)
    assert np.allclose(flat.std(axis=0), 1.0, atol=1e-5)


def test_normalization_round_trip(tiny_dataset):
    x = tiny_dataset.states[0]
    assert np.allclose(tiny_dataset.denormalize(tiny_dataset.normalize(x)), x, atol=1e-5)


def test_save_load_round_trip(tiny_dataset, tmp_path):
    path = tmp_path / "data.ndjson"
    save_dataset(tiny_dataset, path)
    loaded = load_dataset(path)
    assert np.array_equal(loaded.states, tiny_dataset.states)
    assert np.array_equal(loaded.actions, tiny_dataset.actions)
    assert np.array_equal(loaded.mean, tiny_dataset.mean)
    assert loaded.maze == tiny_dataset.maze
    assert loaded.seed == tiny_dataset.seed


def test_dataset_file_has_header_and_one_line_per_episode(tiny_dataset, tmp_path):
    path = tmp_path / "data.ndjson"
    save_dataset(tiny_dataset, path)
    lines = path.read_text().splitlines()
    assert len(lines) == tiny_dataset.n_episodes + 1
    assert '"schema": "dog.dataset/1"' in lines[0]


def test_load_rejects_foreign_schema(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"schema": "other/1"}\n')
    with pytest.raises(ValueError, match="schema"):
        load_dataset(path)


def test_generate_rejects_bad_lengths(open_maze):
    with pytest.raises(ValueError, match="n_steps"):
        generate_dataset(open_maze, n_steps=50, L=100, seed=0)
    with pytest.raises(ValueError):
        generate_dataset(open_maze, n_steps=50, L=1, seed=0)


def test_generate_rejects_fully_blocked_maze():
    maze = MazeSpec(width=1, height=2, blocked=[(0, 0), (0, 1)])
    with pytest.raises(ValueError, match="blocked"):
        generate_dataset(maze, n_steps=100, L=10, seed=0)


def test_blocked_cell_outside_grid_rejected():
    with pytest.raises(ValueError):
        MazeSpec(width=2, height=2, blocked=[(2, 0)])


def test_slice_windows_counts_and_views(tiny_dataset):
    windows = slice_windows(tiny_dataset, 8)
    assert len(windows) == tiny_dataset.n_episodes * (100 - 8 + 1)
    assert windows[1].shape == (8, 4)
    assert np.array_equal(windows[1], tiny_dataset.states[0, 1:9])
    assert np.shares_memory(windows[0], tiny_dataset.states)


def test_slice_windows_rejects_bad_horizon(tiny_dataset):
    with pytest.raises(ValueError):
        slice_windows(tiny_dataset, 1)
    with pytest.raises(ValueError, match="exceeds"):
        slice_windows(tiny_dataset, 101)


def test_split_episodes_holds_out_the_last_episodes(tiny_dataset):
    train, heldout = split_episodes(tiny_dataset, 0.1)
    assert (train.n_episodes, heldout.n_episodes) == (18, 2)
    assert np.array_equal(heldout.states, tiny_dataset.states[18:])
    assert np.array_equal(heldout.mean, tiny_dataset.mean)
    same, none = split_episodes(tiny_dataset, 0.0)
    assert same is tiny_dataset and none is None
