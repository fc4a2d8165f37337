"""
Seeded randomness, Adam and a finite-difference gradient oracle
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

_SEED_LIMIT = 2**64


class NumericalError(RuntimeError):
    """Raised when a loss, gradient or sampler state becomes non-finite."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent 64-bit seed from a parent seed and integer keys."""
    sequence = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RngStream:
    """
    Reproducible random stream.

    Backed by numpy's counter-based Philox generator; the bit-generator state
    (key + counter) is enough to resume a sequence exactly.
    """

    seed: int
    _generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < _SEED_LIMIT:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.seed = int(self.seed)
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed])))

    def fork(self, *keys: int) -> RngStream:
        """Child stream that does not advance this one."""
        return RngStream(derive_seed(self.seed, *keys))

    def normal(self, shape) -> np.ndarray:
        return self._generator.standard_normal(shape)

    def uniform(self, low, high, shape=None) -> np.ndarray:
        return self._generator.uniform(low, high, shape)

    def integers(self, low, high, shape=None) -> np.ndarray:
        return self._generator.integers(low, high, shape)


def seeded_normal(rng: RngStream, count: int) -> np.ndarray:
    """
    Draw `count` i.i.d. standard-normal values and advance the stream.

    Args:
        rng: Stream to draw from
        count: Number of draws (>= 0)

    Returns:
        1-D float64 array of length count
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    return rng.normal(int(count))


@dataclass(frozen=True)
class AdamState:
    """Moment accumulators and hyperparameters for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, like: np.ndarray, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
        return cls(
            m=np.zeros_like(like),
            v=np.zeros_like(like),
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """
    Apply one bias-corrected Adam update.

    Coordinates whose gradient is exactly zero keep their value, so a zero
    gradient is the identity on params whatever the accumulated moments.

    Args:
        params: Current parameter tensor
        grads: Gradient of the loss w.r.t. params
        state: Moments matching params' shape

    Returns:
        Tuple of (new params, new state); inputs are not modified
    """
    params = np.asarray(params)
    grads = np.asarray(grads)
    if params.shape != grads.shape or params.shape != state.m.shape or params.shape != state.v.shape:
        raise ValueError(
            f"adam_step shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.m.shape}/{state.v.shape}"
        )

    step = state.step + 1
    grads = grads.astype(state.m.dtype, copy=False)
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    # Entries with an exactly-zero gradient are left in place (moments still decay).
    update = np.where(grads == 0, 0.0, update)
    new_params = (params - update).astype(params.dtype, copy=False)
    return new_params, replace(state, m=m.astype(state.m.dtype), v=v.astype(state.v.dtype), step=step)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    Args:
        f: Real-valued function of an array
        x: Point to differentiate at (any shape)
        h: Step size (> 0)

    Returns:
        float64 array shaped like x
    """
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = float(f(x))
        flat[i] = original - h
        lower = float(f(x))
        flat[i] = original
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise ValueError(f"finite_diff_grad: non-finite evaluation at coordinate {i}")
        flat_grad[i] = (upper - lower) / (2.0 * h)
    return grad
