"""
Shared tiny-scale fixtures: a small dataset, planner and executor trained in seconds
"""
import pytest

from models.config_models import ExecutorConfig, MazeSpec, PlannerConfig
from utils.diffusion import make_schedule, train_planner
from utils.executor import sample_her_tuples, train_executor
from utils.maze_env import generate_dataset

TINY_PLANNER = dict(
    diffusion_steps=10, horizon=8, width=64, depth=2, time_dim=8,
    batch=64, steps=200, lr=1e-3, seed=0, log_every=20, progress=False,
)
TINY_EXECUTOR = dict(hidden=(32, 32), batch=64, steps=300, lr=1e-3, seed=0, log_every=50, progress=False)


@pytest.fixture(scope="session")
def open_maze() -> MazeSpec:
    return MazeSpec()


@pytest.fixture(scope="session")
def tiny_dataset(open_maze):
    return generate_dataset(open_maze, n_steps=2000, L=100, seed=0)


@pytest.fixture(scope="session")
def tiny_planner_config() -> PlannerConfig:
    return PlannerConfig(**TINY_PLANNER)


@pytest.fixture(scope="session")
def tiny_planner(tiny_dataset, tiny_planner_config):
    cfg = tiny_planner_config
    sched = make_schedule(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max)
    return train_planner(tiny_dataset, sched, cfg)


@pytest.fixture(scope="session")
def tiny_sched(tiny_planner):
    return tiny_planner.make_schedule()


@pytest.fixture(scope="session")
def tiny_executor_config() -> ExecutorConfig:
    return ExecutorConfig(**TINY_EXECUTOR)


@pytest.fixture(scope="session")
def tiny_tuples(tiny_dataset):
    return sample_her_tuples(tiny_dataset, T_a=8, count=2000, seed=0)


@pytest.fixture(scope="session")
def tiny_executor(tiny_tuples, tiny_executor_config):
    return train_executor(tiny_tuples, tiny_executor_config)
