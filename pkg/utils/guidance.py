"""
Training-free goal guidance for the reverse diffusion chain
"""
from __future__ import annotations

import logging

import numpy as np

from models.config_models import GuidanceConfig
from models.goal_spec import GoalSpec
from utils.diffusion import (
    DenoiserParams,
    NoiseSchedule,
    PlanWindow,
    denoised_estimate,
    run_reverse_chain,
)
from utils.goal_energy import eval_grad
from utils.maze_env import EnvState
from utils.networks import ResidualDenoiser
from utils.numeric import NumericalError

logger = logging.getLogger(__name__)

F32 = np.float32


def guidance_grad(params: DenoiserParams, sched: NoiseSchedule, spec: GoalSpec, wn: np.ndarray, n: int,
                  cfg: GuidanceConfig, net: ResidualDenoiser | None = None) -> np.ndarray:
    """
    Guidance term -eta * grad_{w_n} g(w0_hat) for one normalized noisy window.

    The noise prediction is held constant, so the chain rule only passes
    through denormalization (x std) and the linear denoised estimate
    (x 1 / sqrt(alpha_bar)). The result is clipped to norm cfg.grad_clip and
    row 0 (the clamped current state) is zeroed.

    Args:
        params: Trained denoiser
        sched: Noise schedule
        spec: Goal to descend
        wn: (H, n_s) normalized window at step n
        n: Diffusion step
        cfg: Guidance scale and clip
        net: Optional prebuilt network for params

    Returns:
        (H, n_s) float32 increment for wn
    """
    if not 1 <= n <= sched.N:
        raise ValueError(f"diffusion step n={n} outside 1..{sched.N}")
    wn = np.asarray(wn, dtype=F32)
    if cfg.eta == 0:
        return np.zeros_like(wn)

    net = net or params.network()
    eps_hat = net.predict(wn.reshape(1, -1), np.array([n])).reshape(wn.shape)
    w0_hat = denoised_estimate(wn, n, eps_hat, sched)
    physical = params.denormalize(w0_hat)
    grad_phys = eval_grad(spec, physical).grad
    grad = -cfg.eta * grad_phys * params.std.astype(np.float64) / np.sqrt(sched.alpha_bar[n])

    if not np.all(np.isfinite(grad)):
        raise NumericalError("guidance gradient is not finite", step=n)
    norm = float(np.linalg.norm(grad))
    if norm > cfg.grad_clip:
        grad = grad * (cfg.grad_clip / norm)
    grad[0] = 0.0
    return grad.astype(F32)


def sample_guided(params: DenoiserParams, sched: NoiseSchedule, spec: GoalSpec, s_t: EnvState, H: int,
                  cfg: GuidanceConfig, seed: int) -> PlanWindow:
    """
    Goal-conditioned plan window.

    Runs the unconditional reverse chain and, at every step n <= guide_from,
    adds the guidance term `repeats` times after the noise injection. With
    eta = 0 the result is bit-identical to sample_unconditional.

    Args:
        params: Trained denoiser
        sched: Noise schedule
        spec: Goal energy to minimize
        s_t: Current state (row 0)
        H: Horizon
        cfg: Guidance settings
        seed: Sampling seed

    Returns:
        (H, 4) float32 window in physical units
    """
    guide_from = sched.N if cfg.guide_from is None else cfg.guide_from
    if not 1 <= guide_from <= sched.N:
        raise ValueError(f"guide_from={guide_from} outside 1..{sched.N}")
    if cfg.eta == 0:
        return run_reverse_chain(params, sched, s_t, H, seed)

    def guide(x: np.ndarray, n: int, net: ResidualDenoiser) -> np.ndarray:
        if n > guide_from:
            return x
        for _ in range(cfg.repeats):
            x = (x + guidance_grad(params, sched, spec, x, n, cfg, net=net)).astype(F32)
        return x

    return run_reverse_chain(params, sched, s_t, H, seed, guide=guide)
