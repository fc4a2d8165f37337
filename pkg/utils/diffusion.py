"""
Noise schedule, trajectory denoiser training and unconditional sampling
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from tqdm import tqdm

import config
from models.config_models import PlannerConfig
from utils.checkpoint import read_checkpoint, write_checkpoint
from utils.maze_env import EnvState, TrajectoryDataset, f32_list, slice_windows, split_episodes
from utils.networks import AdamOptimizer, DenoiserArch, ResidualDenoiser
from utils.numeric import NumericalError, RngStream

logger = logging.getLogger(__name__)

F32 = np.float32

# An (H, n_s) float32 array of states; row 0 is the current state.
PlanWindow = np.ndarray


@dataclass(frozen=True)
class NoiseSchedule:
    """Coefficients for n = 1..N, stored at index n (index 0 unused, alpha_bar[0] = 1)."""

    N: int
    beta_min: float
    beta_max: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray


def make_schedule(N: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """
    Linear beta schedule.

    Args:
        N: Number of diffusion steps (>= 1)
        beta_min: beta[1]
        beta_max: beta[N]

    Returns:
        NoiseSchedule with alpha_bar as a running product
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 0 < beta_min <= beta_max < 1:
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got beta_min={beta_min}, beta_max={beta_max}")
    beta = np.zeros(N + 1, dtype=np.float64)
    beta[1:] = np.linspace(beta_min, beta_max, N) if N > 1 else beta_min
    alpha = 1.0 - beta
    alpha_bar = np.ones(N + 1, dtype=np.float64)
    for n in range(1, N + 1):
        alpha_bar[n] = alpha_bar[n - 1] * alpha[n]
    return NoiseSchedule(N=N, beta_min=beta_min, beta_max=beta_max, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _check_step(n: int, sched: NoiseSchedule) -> None:
    if not 1 <= n <= sched.N:
        raise ValueError(f"diffusion step n={n} outside 1..{sched.N}")


def noise_window(w0: np.ndarray, n: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward map q(w_n | w_0): sqrt(alpha_bar) w0 + sqrt(1 - alpha_bar) eps."""
    _check_step(n, sched)
    w0 = np.asarray(w0)
    eps = np.asarray(eps)
    if w0.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} does not match window shape {w0.shape}")
    a_bar = sched.alpha_bar[n]
    return (np.sqrt(a_bar) * w0 + np.sqrt(1.0 - a_bar) * eps).astype(w0.dtype)


def denoised_estimate(wn: np.ndarray, n: int, eps_hat: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One-shot clean-window estimate (wn - sqrt(1 - alpha_bar) eps_hat) / sqrt(alpha_bar)."""
    _check_step(n, sched)
    wn = np.asarray(wn)
    a_bar = sched.alpha_bar[n]
    return ((wn - np.sqrt(1.0 - a_bar) * np.asarray(eps_hat)) / np.sqrt(a_bar)).astype(wn.dtype)


@dataclass
class DenoiserParams:
    """Trained noise predictor plus everything needed to use it."""

    arch: DenoiserArch
    weights: dict[str, np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    schedule: dict
    train_config: dict = field(default_factory=dict)
    loss_log: list[list[float]] = field(default_factory=list)
    heldout_loss: float | None = None

    def network(self) -> ResidualDenoiser:
        return ResidualDenoiser(self.arch, self.weights, self.make_schedule().alpha_bar)

    def make_schedule(self) -> NoiseSchedule:
        return make_schedule(self.schedule["N"], self.schedule["beta_min"], self.schedule["beta_max"])

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return ((np.asarray(x, dtype=F32) - self.mean) / self.std).astype(F32)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=F32) * self.std + self.mean).astype(F32)


def predict_noise(params: DenoiserParams, wn: np.ndarray, n: int, net: ResidualDenoiser | None = None) -> np.ndarray:
    """eps_theta(wn, n) for one normalized (H, n_s) window."""
    net = net or params.network()
    flat = np.asarray(wn, dtype=F32).reshape(1, -1)
    return net.predict(flat, np.array([n])).reshape(wn.shape)


def _noisy_batch(windows: list[np.ndarray], sched: NoiseSchedule, rng: RngStream, batch: int):
    idx = rng.integers(0, len(windows), batch)
    x0 = np.stack([windows[i] for i in idx]).reshape(batch, -1)
    steps = rng.integers(1, sched.N + 1, batch)
    eps = rng.normal(x0.shape).astype(F32)
    a_bar = sched.alpha_bar[steps][:, None]
    xn = (np.sqrt(a_bar) * x0 + np.sqrt(1.0 - a_bar) * eps).astype(F32)
    return xn, steps, eps


def _window_stats(windows: list[np.ndarray], chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry mean and standard deviation of the flattened windows."""
    total = np.zeros(windows[0].size, dtype=np.float64)
    total_sq = np.zeros_like(total)
    for start in range(0, len(windows), chunk):
        block = np.stack(windows[start:start + chunk]).reshape(-1, total.size).astype(np.float64)
        total += block.sum(axis=0)
        total_sq += np.square(block).sum(axis=0)
    mean = total / len(windows)
    var = np.maximum(total_sq / len(windows) - np.square(mean), 0.0)
    return mean.astype(F32), np.sqrt(var).astype(F32)


def denoising_loss(params: DenoiserParams, sched: NoiseSchedule, windows: list[np.ndarray],
                   seed: int = 0, batches: int = 8, batch: int = 256) -> float:
    """Mean per-entry noise-prediction error over random (window, n, eps) draws of normalized windows."""
    if not windows:
        raise ValueError("denoising_loss needs at least one window")
    net = params.network()
    rng = RngStream(seed)
    total = 0.0
    for _ in range(batches):
        xn, steps, eps = _noisy_batch(windows, sched, rng, batch)
        err = net.predict(xn, steps) - eps
        total += float(np.mean(np.square(err, dtype=np.float64)))
    return total / batches


def train_planner(dataset: TrajectoryDataset, sched: NoiseSchedule, cfg: PlannerConfig) -> DenoiserParams:
    """
    Fit the unconditional trajectory model by noise-prediction regression.

    Args:
        dataset: Offline episodes; windows are normalized with its statistics
        sched: Noise schedule
        cfg: Horizon, architecture and optimizer settings

    Returns:
        DenoiserParams whose loss_log holds [step, running loss] pairs
    """
    if dataset.n_episodes == 0:
        raise ValueError("train_planner: dataset is empty")
    if cfg.horizon > dataset.episode_length:
        raise ValueError(f"train_planner: horizon {cfg.horizon} exceeds episode length {dataset.episode_length}")

    train_set, heldout_set = split_episodes(dataset, cfg.holdout_fraction)
    windows = slice_windows(train_set, cfg.horizon, normalized=True)
    arch = DenoiserArch(cfg.horizon, config.STATE_DIM, cfg.width, cfg.depth, cfg.time_dim)
    rng = RngStream(cfg.seed)
    center, spread = _window_stats(windows)
    net = ResidualDenoiser.initialize(arch, rng.fork(0), sched.alpha_bar, center=center, spread=spread)
    batch_rng = rng.fork(1)
    optimizer = AdamOptimizer(net.weights, lr=cfg.lr)
    logger.info("Training planner: %d windows, H=%d, N=%d, %d steps", len(windows), cfg.horizon, sched.N, cfg.steps)

    running = None
    loss_log: list[list[float]] = []
    for step in tqdm(range(cfg.steps), desc="planner", disable=not cfg.progress):
        xn, steps, eps = _noisy_batch(windows, sched, batch_rng, cfg.batch)
        pred, cache = net.forward(xn, steps)
        err = pred - eps
        loss = float(np.mean(np.square(err, dtype=np.float64)))
        if not np.isfinite(loss):
            raise NumericalError("planner training loss is not finite", step=step)
        grads = net.backward(cache, (2.0 / err.size) * err)
        optimizer.step(net.weights, grads)

        running = loss if running is None else 0.98 * running + 0.02 * loss
        if step == 0 or (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1:
            loss_log.append([step, running])
            logger.debug("planner step %d running loss %.5f", step, running)

    params = DenoiserParams(
        arch=arch,
        weights=net.weights,
        mean=dataset.mean.copy(),
        std=dataset.std.copy(),
        schedule={"N": sched.N, "beta_min": sched.beta_min, "beta_max": sched.beta_max},
        train_config=cfg.model_dump(mode="json"),
        loss_log=loss_log,
    )
    if heldout_set is not None:
        params.heldout_loss = denoising_loss(params, sched, slice_windows(heldout_set, cfg.horizon, normalized=True),
                                             seed=cfg.seed)
        logger.info("Planner held-out per-entry loss %.4f", params.heldout_loss)
    logger.info("Planner running loss %.4f -> %.4f", loss_log[0][1], loss_log[-1][1])
    return params


def reverse_step(x: np.ndarray, eps_hat: np.ndarray, n: int, sched: NoiseSchedule, noise: np.ndarray | None) -> np.ndarray:
    """(1 + beta/2) x + beta * score + sqrt(beta) z, with score = -eps_hat / sqrt(1 - alpha_bar)."""
    beta = sched.beta[n]
    score = -eps_hat / np.sqrt(1.0 - sched.alpha_bar[n])
    out = (1.0 + 0.5 * beta) * x + beta * score
    if noise is not None:
        out = out + np.sqrt(beta) * noise
    return out.astype(F32)


# guide(x, n, net) -> x', applied after each reverse step and before clamping.
StepHook = Callable[[np.ndarray, int, ResidualDenoiser], np.ndarray]


def run_reverse_chain(params: DenoiserParams, sched: NoiseSchedule, s_t: EnvState, H: int, seed: int,
                      guide: StepHook | None = None) -> PlanWindow:
    """Shared reverse loop for unconditional and guided sampling (normalized space)."""
    if H != params.arch.horizon:
        raise ValueError(f"horizon H={H} does not match the trained horizon {params.arch.horizon}")
    if sched.N != params.schedule["N"]:
        raise ValueError(f"schedule has N={sched.N} but the planner was trained with N={params.schedule['N']}")
    net = params.network()
    rng = RngStream(seed)
    shape = (H, params.arch.state_dim)
    current = params.normalize(s_t.to_array())

    x = rng.normal(shape).astype(F32)
    x[0] = current
    for n in range(sched.N, 0, -1):
        eps_hat = net.predict(x.reshape(1, -1), np.array([n])).reshape(shape)
        noise = rng.normal(shape).astype(F32) if n > 1 else None
        x = reverse_step(x, eps_hat, n, sched, noise)
        if guide is not None:
            x = guide(x, n, net)
        x[0] = current
        if not np.all(np.isfinite(x)):
            raise NumericalError("sampler state is not finite", step=n)

    window = params.denormalize(x)
    window[0] = s_t.to_array()
    return window


def sample_unconditional(params: DenoiserParams, sched: NoiseSchedule, s_t: EnvState, H: int, seed: int) -> PlanWindow:
    """
    Draw one plan window from p(window | s_t) by inpainting row 0.

    Args:
        params: Trained denoiser
        sched: Its noise schedule
        s_t: Current state, clamped into row 0 after every reverse step
        H: Horizon (must match training)
        seed: Sampling seed

    Returns:
        (H, 4) float32 window in physical units with row 0 equal to s_t
    """
    return run_reverse_chain(params, sched, s_t, H, seed)


def save_planner(params: DenoiserParams, path: str | Path) -> None:
    metadata = {
        "arch": {"horizon": params.arch.horizon, "state_dim": params.arch.state_dim, "width": params.arch.width,
                 "depth": params.arch.depth, "time_dim": params.arch.time_dim},
        "schedule": params.schedule,
        "mean": f32_list(params.mean),
        "std": f32_list(params.std),
        "train_config": params.train_config,
        "loss_log": params.loss_log,
        "heldout_loss": params.heldout_loss,
    }
    write_checkpoint(path, "planner", metadata, params.weights)
    logger.info("Saved planner checkpoint to %s", path)


def load_planner(path: str | Path) -> DenoiserParams:
    metadata, weights = read_checkpoint(path, component="planner")
    arch = DenoiserArch(**metadata["arch"])
    # Constructing the network validates every weight shape.
    schedule = metadata["schedule"]
    ResidualDenoiser(arch, weights, make_schedule(schedule["N"], schedule["beta_min"], schedule["beta_max"]).alpha_bar)
    return DenoiserParams(
        arch=arch,
        weights=weights,
        mean=np.array(metadata["mean"], dtype=F32),
        std=np.array(metadata["std"], dtype=F32),
        schedule=metadata["schedule"],
        train_config=metadata.get("train_config", {}),
        loss_log=metadata.get("loss_log", []),
        heldout_loss=metadata.get("heldout_loss"),
    )
