"""
Desk-scale behavioral checks on the default configuration.

These train the full-size planner and executor (tens of minutes on a laptop
CPU) and are deselected by default; run them with `pytest -m slow`.
"""
import numpy as np
import pytest

from models.config_models import ExecutorConfig, GuidanceConfig, PipelineConfig, RolloutConfig
from models.goal_spec import parse_goal_spec
from utils.checkpoint import read_checkpoint
from utils.diffusion import make_schedule, sample_unconditional, save_planner, train_planner
from utils.executor import make_actor, sample_her_tuples, train_executor, waypoint_reach_rate
from utils.goal_energy import eval_energy
from utils.guidance import sample_guided
from utils.maze_env import EnvState, generate_dataset
from utils.render import build_svg
from utils.rollout import evaluate, record_to_obj, rollout_batch

pytestmark = pytest.mark.slow

CORNER = '{"state": {"x": 4.5, "y": 4.5}}'
RUNS = 100


@pytest.fixture(scope="module")
def defaults() -> PipelineConfig:
    return PipelineConfig()


@pytest.fixture(scope="module")
def dataset(defaults):
    d = defaults.dataset
    return generate_dataset(defaults.maze, d.n_steps, d.episode_length, d.seed, d)


@pytest.fixture(scope="module")
def planner(dataset, defaults):
    p = defaults.planner.model_copy(update={"progress": False})
    return train_planner(dataset, make_schedule(p.diffusion_steps, p.beta_min, p.beta_max), p)


@pytest.fixture(scope="module")
def pd_actor(defaults):
    return make_actor("pd", defaults.executor)


def _rollouts(defaults, planner, actor, goal, seed, **overrides):
    schedule = [{"step": 0, "goal": goal}] if goal else []
    cfg = defaults.rollout.model_copy(update={"n_rollouts": RUNS, "workers": 4})
    cfg = RolloutConfig.model_validate({**cfg.model_dump(), "goal_schedule": schedule, **overrides})
    return rollout_batch(defaults.maze, planner, actor, cfg, seed)


def _quadrant(x: float, y: float) -> int:
    return int(x >= 2.5) + 2 * int(y >= 2.5)


def test_planner_learns_the_noise(planner):
    assert planner.heldout_loss < 0.5


def test_unguided_endpoints_spread_over_the_maze(defaults, planner, pd_actor):
    records = _rollouts(defaults, planner, pd_actor, None, seed=1, start=(2.5, 2.5, 0.0, 0.0))
    endpoints = np.array([r.states[-1, :2] for r in records])
    assert len({_quadrant(x, y) for x, y in endpoints}) >= 3


def test_unguided_plan_endpoints_stay_near_the_centre(planner):
    sched = planner.make_schedule()
    H = planner.arch.horizon
    ends = np.array([sample_unconditional(planner, sched, EnvState(2.5, 2.5), H, seed)[-1, :2] for seed in range(RUNS)])
    assert len({_quadrant(x, y) for x, y in ends}) >= 3
    assert np.linalg.norm(ends.mean(axis=0) - 2.5) <= 1.0


def test_state_goal_is_reached(defaults, planner, pd_actor):
    summary = evaluate(_rollouts(defaults, planner, pd_actor, CORNER, seed=2), parse_goal_spec(CORNER))
    assert summary.success_rate >= 0.8


@pytest.mark.parametrize("target", [1.0, 4.0])
def test_partial_goal_pins_only_x(defaults, planner, pd_actor, target):
    goal = f'{{"partial": {{"dim": 0, "target": {target}}}}}'
    endpoints = np.array([r.states[-1, :2] for r in _rollouts(defaults, planner, pd_actor, goal, seed=3)])
    assert np.mean(np.abs(endpoints[:, 0] - target)) < 0.5
    assert np.std(endpoints[:, 1]) >= 0.5


def test_path_length_goals_order_the_distance_travelled(defaults, planner, pd_actor):
    def mean_length(goal):
        return evaluate(_rollouts(defaults, planner, pd_actor, goal, seed=4), None).path_length.mean

    close = mean_length('{"path_length": {"sign": 1}}')
    free = mean_length(None)
    far = mean_length('{"path_length": {"sign": -1}}')
    assert close < 0.8 * free
    assert far > 1.2 * free


def test_hybrid_goal_avoids_an_unseen_obstacle(defaults, planner, pd_actor):
    goal = ('{"hybrid": [{"w": 1, "g": {"state": {"x": 4.5, "y": 4.5}}}, '
            '{"w": 10, "g": {"avoid": {"x": 2.5, "y": 2.5, "sigma": 1.0}}}]}')
    summary = evaluate(_rollouts(defaults, planner, pd_actor, goal, seed=5), parse_goal_spec(goal))
    assert summary.violation_fraction.mean <= 0.02
    assert summary.success_rate >= 0.7


def test_hybrid_plan_windows_avoid_the_disc(planner):
    spec = parse_goal_spec('{"hybrid": [{"w": 1, "g": {"state": {"x": 4.5, "y": 4.5}}}, '
                           '{"w": 10, "g": {"avoid": {"x": 2.5, "y": 2.5, "sigma": 1.0}}}]}')
    sched = planner.make_schedule()
    H = planner.arch.horizon
    windows = [sample_guided(planner, sched, spec, EnvState(0.5, 0.5), H, GuidanceConfig(), seed) for seed in range(RUNS)]
    rows = np.concatenate([w[:, :2] for w in windows])
    assert np.mean(np.hypot(rows[:, 0] - 2.5, rows[:, 1] - 2.5) < 1.0) <= 0.02


def test_stronger_guidance_lowers_state_energy(planner):
    spec = parse_goal_spec(CORNER)
    sched = planner.make_schedule()
    H = planner.arch.horizon

    def mean_energy(eta):
        cfg = GuidanceConfig(eta=eta)
        return np.mean([eval_energy(spec, sample_guided(planner, sched, spec, EnvState(0.5, 0.5), H, cfg, seed))
                        for seed in range(RUNS)])

    e0, e05, e1 = mean_energy(0.0), mean_energy(0.5), mean_energy(1.0)
    assert e05 <= 1.05 * e0
    assert e1 <= 1.05 * e05


def test_switching_goals_mid_rollout(defaults, planner, pd_actor):
    b = '{"state": {"x": 0.5, "y": 4.5}}'
    cfg = defaults.rollout.model_copy(update={"n_rollouts": 50, "workers": 4})
    cfg = RolloutConfig.model_validate({
        **cfg.model_dump(),
        "goal_schedule": [{"step": 0, "goal": CORNER}, {"step": 100, "goal": b}],
    })
    records = rollout_batch(defaults.maze, planner, pd_actor, cfg, seed=6)
    spec = parse_goal_spec(b)
    for record in records:
        assert all(p.goal_index == 1 for p in record.plans if p.t_p >= 100)
    before = np.mean([eval_energy(spec, r.states[50:100]) for r in records])
    after = np.mean([eval_energy(spec, r.states[-50:]) for r in records])
    assert after < before


def test_executors_reach_held_out_waypoints(dataset, defaults):
    n = dataset.n_episodes
    train, heldout = dataset.subset(range(n - n // 10)), dataset.subset(range(n - n // 10, n))
    e = defaults.executor.model_copy(update={"progress": False})
    params = train_executor(sample_her_tuples(train, e.max_offset, e.n_tuples, e.seed), e)
    probe = sample_her_tuples(heldout, 8, 500, seed=7)
    assert waypoint_reach_rate(dataset.maze, probe, make_actor("pd", e), 8) >= 0.9
    assert waypoint_reach_rate(dataset.maze, probe, make_actor("learned", e, params), 8) >= 0.75


def test_learned_executor_pushes_towards_the_target(dataset):
    e = ExecutorConfig(progress=False)
    params = train_executor(sample_her_tuples(dataset, e.max_offset, e.n_tuples, e.seed), e)
    actor = make_actor("learned", e, params)
    rng = np.random.default_rng(8)
    starts = rng.uniform(0.5, 3.5, (200, 2))
    pushes = [actor(EnvState(x, y), EnvState(x + 0.5, y)).ax > 0 for x, y in starts]
    assert np.mean(pushes) >= 0.9


def test_pipeline_outputs_are_reproducible(defaults, dataset, planner, pd_actor, tmp_path):
    p = defaults.planner.model_copy(update={"steps": 200, "progress": False})
    sched = make_schedule(p.diffusion_steps, p.beta_min, p.beta_max)
    save_planner(train_planner(dataset, sched, p), tmp_path / "a.dogc")
    save_planner(train_planner(dataset, sched, p), tmp_path / "b.dogc")
    assert (tmp_path / "a.dogc").read_bytes() == (tmp_path / "b.dogc").read_bytes()
    assert read_checkpoint(tmp_path / "a.dogc")[0]["component"] == "planner"

    cfg = RolloutConfig(n_rollouts=3, max_steps=50, goal_schedule=[{"step": 0, "goal": CORNER}])
    a = rollout_batch(defaults.maze, planner, pd_actor, cfg, seed=9)
    b = rollout_batch(defaults.maze, planner, pd_actor, cfg.model_copy(update={"workers": 3}), seed=9)
    assert [record_to_obj(r) for r in a] == [record_to_obj(r) for r in b]
    assert build_svg(defaults.maze, a) == build_svg(defaults.maze, b)
