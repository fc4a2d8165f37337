"""
Goal energies over plan windows, with analytic gradients
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import config
from models.goal_spec import (
    DirectionGoal,
    GoalSpec,
    HybridGoal,
    PartialGoal,
    PathLengthGoal,
    RegionAvoidGoal,
    SequenceGoal,
    SpeedGoal,
    StateGoal,
)

EPS_S = config.SMOOTHING_EPS


@dataclass(frozen=True)
class GoalEval:
    value: float
    grad: np.ndarray  # (H, n_s), d value / d window


def _as_window(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 2:
        raise ValueError(f"goal energies need an (H, n_s) window with n_s >= 2, got shape {w.shape}")
    return w


def _state(spec: StateGoal, w: np.ndarray) -> GoalEval:
    grad = np.zeros_like(w)
    dx, dy = w[-1, 0] - spec.x, w[-1, 1] - spec.y
    grad[-1, 0], grad[-1, 1] = 2.0 * dx, 2.0 * dy
    return GoalEval(dx * dx + dy * dy, grad)


def _partial(spec: PartialGoal, w: np.ndarray) -> GoalEval:
    if spec.dim >= w.shape[1]:
        raise ValueError(f"partial goal dim {spec.dim} out of range for {w.shape[1]} state dims")
    grad = np.zeros_like(w)
    d = w[-1, spec.dim] - spec.target
    grad[-1, spec.dim] = 2.0 * d
    return GoalEval(d * d, grad)


def _sequence(spec: SequenceGoal, w: np.ndarray) -> GoalEval:
    ref = np.asarray(spec.points, dtype=np.float64)
    if ref.shape[0] != w.shape[0]:
        raise ValueError(f"sequence goal has {ref.shape[0]} points but the window has {w.shape[0]} rows")
    grad = np.zeros_like(w)
    diff = w[:, :2] - ref
    grad[:, :2] = 2.0 * diff
    return GoalEval(float(np.sum(diff * diff)), grad)


def _path_length(spec: PathLengthGoal, w: np.ndarray) -> GoalEval:
    # sign * sqrt(sum ||p_{i+1} - p_i||^2 + eps)
    grad = np.zeros_like(w)
    steps = np.diff(w[:, :2], axis=0)
    total = float(np.sum(steps * steps)) + EPS_S
    root = np.sqrt(total)
    d_total = np.zeros((w.shape[0], 2))
    d_total[1:] += 2.0 * steps
    d_total[:-1] -= 2.0 * steps
    grad[:, :2] = spec.sign * d_total / (2.0 * root)
    return GoalEval(spec.sign * root, grad)


def _direction(spec: DirectionGoal, w: np.ndarray) -> GoalEval:
    coef = np.asarray(spec.coef, dtype=np.float64)
    if coef.shape[0] != w.shape[1]:
        raise ValueError(f"direction goal has {coef.shape[0]} coefficients but states have {w.shape[1]} dims")
    grad = np.broadcast_to(coef, w.shape).copy()
    return GoalEval(float(np.sum(w @ coef)), grad)


def _avoid(spec: RegionAvoidGoal, w: np.ndarray) -> GoalEval:
    # sum_t -d_t * I(d_t < sigma), d_t the planar distance to the disc centre
    grad = np.zeros_like(w)
    offset = w[:, :2] - np.array([spec.x, spec.y])
    dist = np.sqrt(np.sum(offset * offset, axis=1))
    inside = dist < spec.sigma
    value = -float(np.sum(dist[inside]))
    safe = np.where(dist > 0, dist, 1.0)
    grad[:, :2] = np.where(inside[:, None] & (dist[:, None] > 0), -offset / safe[:, None], 0.0)
    return GoalEval(value, grad)


def _speed(spec: SpeedGoal, w: np.ndarray) -> GoalEval:
    # -sign * mean_t sqrt(vx^2 + vy^2 + eps)
    if w.shape[1] < 4:
        raise ValueError("speed goal needs velocity dims (n_s >= 4)")
    grad = np.zeros_like(w)
    vel = w[:, 2:4]
    speed = np.sqrt(np.sum(vel * vel, axis=1) + EPS_S)
    H = w.shape[0]
    grad[:, 2:4] = -spec.sign * vel / (H * speed[:, None])
    return GoalEval(-spec.sign * float(np.mean(speed)), grad)


def _hybrid(spec: HybridGoal, w: np.ndarray) -> GoalEval:
    value = 0.0
    grad = np.zeros_like(w)
    for term in spec.terms:
        part = _evaluate(term.goal, w)
        value += term.weight * part.value
        grad += term.weight * part.grad
    return GoalEval(value, grad)


_HANDLERS = {
    StateGoal: _state,
    PartialGoal: _partial,
    SequenceGoal: _sequence,
    PathLengthGoal: _path_length,
    DirectionGoal: _direction,
    RegionAvoidGoal: _avoid,
    SpeedGoal: _speed,
    HybridGoal: _hybrid,
}


def _evaluate(spec: GoalSpec, w: np.ndarray) -> GoalEval:
    handler = _HANDLERS.get(type(spec))
    if handler is None:
        raise ValueError(f"unsupported goal spec {type(spec).__name__}")
    return handler(spec, w)


def eval_grad(spec: GoalSpec, w) -> GoalEval:
    """
    Energy and its gradient w.r.t. every window entry, in physical units.

    Args:
        spec: Goal specification
        w: (H, n_s) window

    Returns:
        GoalEval with a float64 gradient shaped like w
    """
    return _evaluate(spec, _as_window(w))


def eval_energy(spec: GoalSpec, w) -> float:
    """Goal energy of a window (lower is better)."""
    return float(_evaluate(spec, _as_window(w)).value)
