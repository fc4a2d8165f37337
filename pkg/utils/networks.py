"""
Hand-differentiated numpy networks: the residual noise predictor and a plain MLP
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from utils.numeric import AdamState, RngStream, adam_step

F32 = np.float32


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, F32(0.0))


def _he_normal(rng: RngStream, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    return (rng.normal((fan_in, fan_out)) * gain * math.sqrt(2.0 / fan_in)).astype(F32)


def sinusoidal_embedding(steps: np.ndarray, dim: int) -> np.ndarray:
    """Transformer-style sin/cos embedding of integer diffusion steps, shape (B, dim)."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(steps, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(F32)


# Smallest per-entry window spread used for scaling; constant entries get this.
SPREAD_FLOOR = 1e-3


@dataclass(frozen=True)
class DenoiserArch:
    horizon: int
    state_dim: int
    width: int = 512
    depth: int = 4
    time_dim: int = 64

    @property
    def io_dim(self) -> int:
        return self.horizon * self.state_dim

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Weight shapes in checkpoint order; the two window.* buffers are not trained."""
        shapes = {
            "window.center": (self.io_dim,),
            "window.spread": (self.io_dim,),
            "skip.gate": (1,),
            "in.w": (self.io_dim, self.width),
            "in.b": (self.width,),
            "time.w": (self.time_dim, self.width),
        }
        for k in range(1, self.depth):
            shapes[f"hidden.{k}.w"] = (self.width, self.width)
            shapes[f"hidden.{k}.b"] = (self.width,)
        shapes["out.w"] = (self.width, self.io_dim)
        shapes["out.b"] = (self.io_dim,)
        return shapes


class ResidualDenoiser:
    """
    Fully-connected residual noise predictor over a flattened window.

    The trunk F sees the noisy window rescaled to unit variance and its output
    is mixed with a schedule-dependent skip term. With y = x / sqrt(abar),
    s^2 = (1 - abar) / abar, u = y - center and d = spread (per entry):

    h0 = relu((u / sqrt(s^2 + d^2)) W_in + b_in + emb(n) W_t)
    h_k = h_{k-1} + relu(h_{k-1} W_k + b_k)     k = 1..depth-1
    F = h W_out + b_out                         (W_out starts at zero)
    eps_hat = g u s / (s^2 + d^2) + F d / sqrt(s^2 + d^2)

    With g = 1 the skip term alone is the exact noise posterior mean when
    windows are Gaussian with the given center and spread, so F only models
    the rest. g is trained from 0, so an untrained model predicts zero noise.
    """

    def __init__(self, arch: DenoiserArch, weights: dict[str, np.ndarray], alpha_bar: np.ndarray):
        shapes = arch.shapes()
        if set(weights) != set(shapes):
            raise ValueError(f"denoiser weights do not match architecture: {sorted(set(weights) ^ set(shapes))}")
        for name, shape in shapes.items():
            if weights[name].shape != shape:
                raise ValueError(f"denoiser weight {name} has shape {weights[name].shape}, expected {shape}")
        self.arch = arch
        self.weights = {name: np.asarray(weights[name], dtype=F32) for name in shapes}
        self.alpha_bar = np.asarray(alpha_bar, dtype=np.float64)

    @classmethod
    def initialize(cls, arch: DenoiserArch, rng: RngStream, alpha_bar: np.ndarray,
                   center: np.ndarray | None = None, spread: np.ndarray | None = None) -> ResidualDenoiser:
        weights = {}
        for name, shape in arch.shapes().items():
            if name == "window.center":
                weights[name] = np.zeros(shape, dtype=F32) if center is None else np.asarray(center, dtype=F32)
            elif name == "window.spread":
                weights[name] = np.ones(shape, dtype=F32) if spread is None else np.asarray(spread, dtype=F32)
            elif name.endswith(".b") or name.startswith(("out.", "skip.")):
                weights[name] = np.zeros(shape, dtype=F32)
            elif name == "time.w":
                weights[name] = (rng.normal(shape) / math.sqrt(shape[0])).astype(F32)
            elif name.startswith("hidden."):
                weights[name] = _he_normal(rng, *shape, gain=1.0 / math.sqrt(arch.depth))
            else:
                weights[name] = _he_normal(rng, *shape)
        return cls(arch, weights, alpha_bar)

    def _scaling(self, x: np.ndarray, steps: np.ndarray):
        a_bar = self.alpha_bar[np.asarray(steps)][:, None]
        s2 = (1.0 - a_bar) / a_bar
        d = np.maximum(self.weights["window.spread"].astype(np.float64), SPREAD_FLOOR)
        denom = s2 + d * d
        u = x / np.sqrt(a_bar) - self.weights["window.center"]
        c_in = 1.0 / np.sqrt(denom)
        return u, c_in, np.sqrt(s2) / denom, d * c_in

    def forward(self, x: np.ndarray, steps: np.ndarray) -> tuple[np.ndarray, dict]:
        """
        Args:
            x: (B, H*n_s) normalized noisy windows
            steps: (B,) diffusion step indices

        Returns:
            Tuple of (predicted noise (B, H*n_s), cache for backward)
        """
        w = self.weights
        u, c_in, c_skip, c_out = self._scaling(np.asarray(x, dtype=np.float64), steps)
        inp = (u * c_in).astype(F32)
        emb = sinusoidal_embedding(steps, self.arch.time_dim)
        z0 = inp @ w["in.w"] + w["in.b"] + emb @ w["time.w"]
        h = _relu(z0)
        hs, zs = [h], []
        for k in range(1, self.arch.depth):
            z = h @ w[f"hidden.{k}.w"] + w[f"hidden.{k}.b"]
            h = h + _relu(z)
            zs.append(z)
            hs.append(h)
        trunk = h @ w["out.w"] + w["out.b"]
        skip = c_skip * u
        out = (w["skip.gate"] * skip + c_out * trunk).astype(F32)
        return out, {"inp": inp, "emb": emb, "z0": z0, "hs": hs, "zs": zs, "skip": skip, "c_out": c_out}

    def predict(self, x: np.ndarray, steps: np.ndarray) -> np.ndarray:
        return self.forward(x, steps)[0]

    def backward(self, cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given dL/d(output); buffers get none."""
        w = self.weights
        d_raw = np.asarray(d_out, dtype=np.float64)
        d_out = (d_raw * cache["c_out"]).astype(F32)
        hs, zs = cache["hs"], cache["zs"]
        grads = {
            "skip.gate": np.array([np.sum(d_raw * cache["skip"])]),
            "out.w": hs[-1].T @ d_out,
            "out.b": d_out.sum(axis=0),
        }
        dh = d_out @ w["out.w"].T
        for k in range(self.arch.depth - 1, 0, -1):
            dz = dh * (zs[k - 1] > 0)
            grads[f"hidden.{k}.w"] = hs[k - 1].T @ dz
            grads[f"hidden.{k}.b"] = dz.sum(axis=0)
            dh = dh + dz @ w[f"hidden.{k}.w"].T
        dz0 = dh * (cache["z0"] > 0)
        grads["in.w"] = cache["inp"].T @ dz0
        grads["in.b"] = dz0.sum(axis=0)
        grads["time.w"] = cache["emb"].T @ dz0
        return {name: g.astype(F32) for name, g in grads.items()}


@dataclass(frozen=True)
class MLPArch:
    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int

    def shapes(self) -> dict[str, tuple[int, ...]]:
        dims = [self.in_dim, *self.hidden, self.out_dim]
        shapes = {}
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            shapes[f"layer.{i}.w"] = (a, b)
            shapes[f"layer.{i}.b"] = (b,)
        return shapes


class MLP:
    """ReLU multilayer perceptron with a linear (zero-initialized) output layer."""

    def __init__(self, arch: MLPArch, weights: dict[str, np.ndarray]):
        shapes = arch.shapes()
        for name, shape in shapes.items():
            if name not in weights or weights[name].shape != shape:
                raise ValueError(f"MLP weight {name} missing or not of shape {shape}")
        self.arch = arch
        self.weights = {name: np.asarray(weights[name], dtype=F32) for name in shapes}
        self.n_layers = len(arch.hidden) + 1

    @classmethod
    def initialize(cls, arch: MLPArch, rng: RngStream) -> MLP:
        n_layers = len(arch.hidden) + 1
        weights = {}
        for name, shape in arch.shapes().items():
            if name.endswith(".b") or name == f"layer.{n_layers - 1}.w":
                weights[name] = np.zeros(shape, dtype=F32)
            else:
                weights[name] = _he_normal(rng, *shape)
        return cls(arch, weights)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        h = np.asarray(x, dtype=F32)
        inputs, pre = [], []
        for i in range(self.n_layers):
            inputs.append(h)
            z = h @ self.weights[f"layer.{i}.w"] + self.weights[f"layer.{i}.b"]
            pre.append(z)
            h = _relu(z) if i < self.n_layers - 1 else z
        return h, {"inputs": inputs, "pre": pre}

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
        grads = {}
        d = np.asarray(d_out, dtype=F32)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                d = d * (cache["pre"][i] > 0)
            grads[f"layer.{i}.w"] = (cache["inputs"][i].T @ d).astype(F32)
            grads[f"layer.{i}.b"] = d.sum(axis=0).astype(F32)
            if i > 0:
                d = d @ self.weights[f"layer.{i}.w"].T
        return grads


class AdamOptimizer:
    """One AdamState per named weight tensor; tensors without a gradient are left alone."""

    def __init__(self, weights: dict[str, np.ndarray], lr: float = 1e-3):
        self.states = {name: AdamState.fresh(w, lr=lr) for name, w in weights.items()}

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name in grads:
            weights[name], self.states[name] = adam_step(weights[name], grads[name], self.states[name])
