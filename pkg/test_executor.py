"""
Tests for HER tuples, the learned executor and the PD tracker
"""
import numpy as np
import pytest

from models.config_models import DatasetConfig, ExecutorConfig
from utils.executor import (
    act_learned,
    act_pd,
    executor_mse,
    init_executor,
    load_executor,
    make_actor,
    sample_her_tuples,
    save_executor,
    train_executor,
    waypoint_reach_rate,
)
from utils.maze_env import Action, EnvState, generate_dataset
from utils.networks import MLP, MLPArch
from utils.numeric import RngStream


def test_offset_one_targets_the_next_state(tiny_dataset):
    for t in sample_her_tuples(tiny_dataset, T_a=1, count=200, seed=1):
        assert t.offset == 1
        assert t.s_target == EnvState.from_array(tiny_dataset.states[t.episode, t.index + 1])


def test_tuples_come_from_one_episode(tiny_dataset):
    L = tiny_dataset.episode_length
    for t in sample_her_tuples(tiny_dataset, T_a=8, count=500, seed=2):
        assert 1 <= t.offset <= 8
        assert t.index + t.offset < L
        assert t.s == EnvState.from_array(tiny_dataset.states[t.episode, t.index])
        assert t.s_target == EnvState.from_array(tiny_dataset.states[t.episode, t.index + t.offset])
        assert t.a == Action.from_array(tiny_dataset.actions[t.episode, t.index])


def test_offsets_are_uniform(tiny_dataset):
    offsets = np.array([t.offset for t in sample_her_tuples(tiny_dataset, T_a=8, count=10_000, seed=3)])
    freqs = np.bincount(offsets, minlength=9)[1:] / len(offsets)
    assert np.all(np.abs(freqs - 1 / 8) < 0.02)


def test_tuple_sampling_preconditions(tiny_dataset):
    with pytest.raises(ValueError, match="T_a"):
        sample_her_tuples(tiny_dataset, T_a=0, count=10, seed=0)
    with pytest.raises(ValueError, match="T_a"):
        sample_her_tuples(tiny_dataset, T_a=100, count=10, seed=0)
    with pytest.raises(ValueError, match="empty"):
        sample_her_tuples(tiny_dataset.subset([]), T_a=4, count=10, seed=0)


def test_untrained_error_is_action_second_moment(tiny_tuples, tiny_executor_config):
    params = init_executor(tiny_tuples, tiny_executor_config)
    actions = np.array([[t.a.ax, t.a.ay] for t in tiny_tuples])
    assert executor_mse(params, tiny_tuples) == pytest.approx(float(np.mean(actions ** 2)), rel=1e-5)
    assert executor_mse(params, tiny_tuples) == pytest.approx(float(actions.var()), rel=0.2)


def test_training_lowers_running_loss(tiny_executor):
    assert tiny_executor.loss_log[-1][1] < tiny_executor.loss_log[0][1]


def test_overfits_a_handful_of_tuples(tiny_tuples):
    few = tiny_tuples[:16]
    cfg = ExecutorConfig(hidden=(128, 128), batch=16, steps=2000, lr=1e-3, progress=False)
    params = train_executor(few, cfg)
    assert executor_mse(params, few) < 1e-3


def test_training_is_deterministic(tiny_tuples):
    cfg = ExecutorConfig(hidden=(16, 16), batch=32, steps=20, progress=False)
    a = train_executor(tiny_tuples[:200], cfg)
    b = train_executor(tiny_tuples[:200], cfg)
    for name in a.weights:
        assert np.array_equal(a.weights[name], b.weights[name])


def test_training_needs_tuples(tiny_executor_config):
    with pytest.raises(ValueError):
        train_executor([], tiny_executor_config)


def test_mlp_backward_matches_directional_derivative():
    rng = RngStream(4)
    arch = MLPArch(8, (16, 16), 2)
    net = MLP.initialize(arch, rng)
    for name in net.weights:
        net.weights[name] = (net.weights[name] + 0.1 * rng.normal(net.weights[name].shape)).astype(np.float32)
    x = rng.normal((5, 8)).astype(np.float32)
    target = rng.normal((5, 2)).astype(np.float32)
    out, cache = net.forward(x)
    grads = net.backward(cache, 2.0 * (out - target) / out.size)
    direction = {name: rng.normal(w.shape) for name, w in net.weights.items()}
    analytic = sum(float(np.sum(grads[name].astype(np.float64) * direction[name])) for name in grads)
    base = {name: w.copy() for name, w in net.weights.items()}

    def loss_along(t: float) -> float:
        net.weights = {name: (base[name] + t * direction[name]).astype(np.float32) for name in base}
        return float(np.mean((net.predict(x).astype(np.float64) - target) ** 2))

    h = 3e-3
    numeric = (loss_along(h) - loss_along(-h)) / (2 * h)
    assert numeric == pytest.approx(analytic, rel=2e-2, abs=1e-3)


def test_pd_fixed_point():
    s = EnvState(1.0, 2.0, 0.3, -0.2)
    assert act_pd(s, s) == Action(0.0, 0.0)


def test_pd_hand_evaluated():
    a = act_pd(EnvState(0, 0, 0, 0), EnvState(1, 0, 0, 0), kp=1.0, kd=0.5)
    assert (a.ax, a.ay) == (1.0, 0.0)
    a = act_pd(EnvState(0, 0, 0, 0), EnvState(0.1, -0.2, 0, 0), kp=2.0, kd=1.0)
    assert (a.ax, a.ay) == pytest.approx((0.2, -0.4))


def test_pd_signs_follow_position_error():
    rng = RngStream(6)
    for _ in range(50):
        p, q = rng.uniform(0, 5, 2), rng.uniform(0, 5, 2)
        v = rng.uniform(-1, 1, 2)
        a = act_pd(EnvState(p[0], p[1], v[0], v[1]), EnvState(q[0], q[1], v[0], v[1]))
        assert np.sign(a.ax) == np.sign(q[0] - p[0])
        assert np.sign(a.ay) == np.sign(q[1] - p[1])


def test_pd_rejects_non_positive_gains():
    with pytest.raises(ValueError, match="gains"):
        act_pd(EnvState(0, 0), EnvState(1, 1), kp=0.0, kd=1.0)


def test_learned_actions_stay_in_the_box_and_are_deterministic(tiny_executor, tiny_dataset):
    states = tiny_dataset.states.reshape(-1, 4)
    rng = RngStream(7)
    for i in rng.integers(0, len(states), 50):
        s = EnvState.from_array(states[i])
        target = EnvState(float(rng.uniform(-3, 8)), float(rng.uniform(-3, 8)))
        a = act_learned(tiny_executor, s, target)
        assert -1.0 <= a.ax <= 1.0 and -1.0 <= a.ay <= 1.0
        assert a == act_learned(tiny_executor, s, target)


def test_learned_actions_are_finite_on_dataset_states(tiny_executor, tiny_dataset):
    states = tiny_dataset.states.reshape(-1, 4)
    targets = np.roll(states, 3, axis=0)
    out = tiny_executor.network().predict(tiny_executor.features(states, targets))
    assert np.isfinite(out).all()


def test_make_actor(tiny_executor, tiny_executor_config):
    s, target = EnvState(1, 1), EnvState(2, 1)
    assert make_actor("pd", tiny_executor_config)(s, target) == act_pd(s, target, 4.0, 4.0)
    assert make_actor("learned", tiny_executor_config, tiny_executor)(s, target) == act_learned(tiny_executor, s, target)
    with pytest.raises(ValueError, match="learned"):
        make_actor("learned", tiny_executor_config)
    with pytest.raises(ValueError, match="unknown"):
        make_actor("mpc", tiny_executor_config)


def test_pd_reaches_sampled_waypoints(tiny_dataset, tiny_executor_config):
    probe = sample_her_tuples(tiny_dataset, T_a=8, count=300, seed=11)
    rate = waypoint_reach_rate(tiny_dataset.maze, probe, make_actor("pd", tiny_executor_config), T_a=8)
    assert rate >= 0.9


def test_reach_rate_is_a_fraction(tiny_dataset, tiny_executor, tiny_executor_config):
    probe = sample_her_tuples(tiny_dataset, T_a=8, count=50, seed=12)
    rate = waypoint_reach_rate(tiny_dataset.maze, probe, make_actor("learned", tiny_executor_config, tiny_executor), 8)
    assert 0.0 <= rate <= 1.0


def test_executor_checkpoint_round_trip(tiny_executor, tmp_path):
    path = tmp_path / "executor.dogc"
    save_executor(tiny_executor, path)
    loaded = load_executor(path)
    assert loaded.arch == tiny_executor.arch
    s, target = EnvState(1.5, 2.5, 0.1, 0.0), EnvState(2.0, 2.0)
    assert act_learned(loaded, s, target) == act_learned(tiny_executor, s, target)


def test_executor_checkpoint_is_not_a_planner(tiny_executor, tmp_path):
    from utils.checkpoint import CheckpointError
    from utils.diffusion import load_planner

    path = tmp_path / "executor.dogc"
    save_executor(tiny_executor, path)
    with pytest.raises(CheckpointError):
        load_planner(path)


@pytest.mark.slow
def test_learned_executor_holds_still_at_the_target(open_maze):
    d = DatasetConfig()
    dataset = generate_dataset(open_maze, d.n_steps, d.episode_length, d.seed, d)
    e = ExecutorConfig(progress=False)
    params = train_executor(sample_her_tuples(dataset, e.max_offset, e.n_tuples, e.seed), e)
    states = dataset.states.reshape(-1, 4)
    net = params.network()
    for i in RngStream(13).integers(0, len(states), 200):
        s = EnvState.from_array(states[i])
        a = act_learned(params, s, s, net)
        assert np.hypot(a.ax, a.ay) <= 0.3
