"""
Tests for seeded randomness, Adam and the finite-difference oracle
"""
import numpy as np
import pytest

from utils.numeric import AdamState, RngStream, adam_step, derive_seed, finite_diff_grad, seeded_normal


def test_derive_seed_is_deterministic_and_key_sensitive():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert derive_seed(7, 1, 2) != derive_seed(7, 2, 1)
    assert derive_seed(7, 1) != derive_seed(8, 1)


def test_same_seed_same_stream():
    a = RngStream(42).normal(100)
    b = RngStream(42).normal(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RngStream(43).normal(100))


def test_fork_does_not_advance_parent():
    parent = RngStream(5)
    parent.fork(3).normal(10)
    assert np.array_equal(parent.normal(4), RngStream(5).normal(4))


def test_negative_seed_rejected():
    with pytest.raises(ValueError, match="seed"):
        RngStream(-1)


def test_seeded_normal_counts():
    assert seeded_normal(RngStream(0), 0).shape == (0,)
    assert seeded_normal(RngStream(0), 1000).shape == (1000,)
    with pytest.raises(ValueError):
        seeded_normal(RngStream(0), -1)


def test_seeded_normal_moments():
    draws = seeded_normal(RngStream(11), 100_000)
    assert abs(draws.mean()) < 0.02
    assert abs(draws.std() - 1.0) < 0.02


def test_adam_zero_gradient_is_identity():
    params = np.array([1.0, -2.0, 3.0])
    state = AdamState(m=np.full(3, 0.5), v=np.full(3, 0.1), step=4)
    new_params, new_state = adam_step(params, np.zeros(3), state)
    assert np.array_equal(new_params, params)
    assert new_state.step == 5


def test_adam_first_step_is_lr_times_sign():
    params = np.array([0.0, 0.0])
    state = AdamState.fresh(params, lr=0.01)
    new_params, _ = adam_step(params, np.array([2.0, -0.5]), state)
    assert new_params == pytest.approx([-0.01, 0.01], abs=1e-6)


def test_adam_minimizes_quadratic():
    p = np.array([3.0])
    state = AdamState.fresh(p, lr=0.05)
    for _ in range(1000):
        p, state = adam_step(p, 2.0 * p, state)
    assert abs(p[0]) < 0.01


def test_adam_does_not_modify_inputs():
    params = np.array([1.0])
    state = AdamState.fresh(params)
    adam_step(params, np.array([1.0]), state)
    assert params[0] == 1.0
    assert state.step == 0 and state.m[0] == 0.0


def test_adam_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        adam_step(np.zeros(3), np.zeros(2), AdamState.fresh(np.zeros(3)))


def test_finite_diff_matches_analytic():
    grad = finite_diff_grad(lambda x: float(np.sum(x ** 2) + x[0] * x[1]), np.array([1.0, 2.0]))
    assert grad == pytest.approx([4.0, 5.0], rel=1e-6)


def test_finite_diff_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda x: 0.0, np.zeros(2), h=0.0)
