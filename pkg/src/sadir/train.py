"""Zero-shot training: learn on a self-made coarser copy of the input sinogram, then
apply the network to the input itself."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .geometry import Geometry, Grid, Image, Sinogram
from .metrics import L_RANGE, SsimConfig, ssim_and_grad
from .net import (RESIDUAL_LIFTS, BlockParams, NetParams, init_params, net_backward, net_forward_array,
                  net_inputs_array, param_names)
from .tomo import fbp_array, project_array

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 500
    seed: int = 0
    ssim_window: int = 11
    eps1: float = 0.01
    eps2: float = 0.03
    L_range: float = L_RANGE
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_std: float = 0.05
    noise_std: float = 0.0
    lambda_init: float = 0.1
    n_blocks: int = 3
    shared_blocks: bool = False
    l2_mean: bool = False
    residual_lift: str = "upsample"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd")
        if not self.L_range > 0:
            raise ValueError("L_range must be > 0")
        if self.residual_lift not in RESIDUAL_LIFTS:
            raise ValueError(f"residual_lift must be one of {RESIDUAL_LIFTS}")

    @property
    def ssim(self) -> SsimConfig:
        return SsimConfig(self.ssim_window, self.eps1, self.eps2, self.L_range)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: TrainConfig, epoch=None, names=None):
    """One bias-corrected Adam update on flat parameter/gradient vectors."""
    grads = np.asarray(grads, dtype=np.float64)
    bad = np.nonzero(~np.isfinite(grads))[0]
    if bad.size:
        where = names[bad[0]] if names is not None else f"index {bad[0]}"
        raise NumericalError(f"non-finite gradient for {where} at epoch {epoch}")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new, AdamState(m, v, step)


def joint_loss_and_grad(x_h, x_ref, cfg: TrainConfig | None = None):
    """``sqrt(1 + l2) * (1 - SSIM)`` and its gradient with respect to ``x_h``."""
    cfg = cfg or TrainConfig()
    x_h = np.asarray(getattr(x_h, "data", x_h), dtype=np.float64)
    x_ref = np.asarray(getattr(x_ref, "data", x_ref), dtype=np.float64)
    if x_h.shape != x_ref.shape:
        raise ValueError(f"shape mismatch: {x_h.shape} vs {x_ref.shape}")
    diff = x_h - x_ref
    l2 = float(np.sum(diff * diff))
    d_l2 = 2.0 * diff
    if cfg.l2_mean:
        l2 /= diff.size
        d_l2 /= diff.size
    s, d_s = ssim_and_grad(x_h, x_ref, cfg.ssim)
    root = np.sqrt(1.0 + l2)
    loss = root * (1.0 - s)
    grad = (1.0 - s) * d_l2 / (2.0 * root) - root * d_s
    return float(loss), grad


def joint_loss(x_h, x_ref, cfg: TrainConfig | None = None) -> float:
    return joint_loss_and_grad(x_h, x_ref, cfg)[0]


def build_zsl_pair(y: Sinogram, geom: Geometry, grid: Grid, noise_std: float = 0.0, seed: int = 0):
    """Training pair from the acquired sinogram: (coarser sinogram, target image).

    The target is the FBP of ``y``; the coarser sinogram re-projects it onto a
    detector with half the bins at twice the pitch.
    """
    if y.data.shape != geom.shape:
        raise ValueError(f"sinogram shape {y.data.shape} does not match geometry {geom.shape}")
    lower = geom.lower()
    x_ref = fbp_array(y.data, geom, grid.n, grid.pixel_size)
    y_l = project_array(x_ref, lower, grid.pixel_size)
    if noise_std > 0:
        y_l = y_l + rng.normal_noise(seed, y_l.shape, noise_std)
    return Sinogram(y_l, lower.det_spacing), Image(x_ref, grid.pixel_size)


def _expand(theta: np.ndarray, cfg: TrainConfig) -> NetParams:
    if cfg.shared_blocks:
        theta = np.tile(theta, cfg.n_blocks)
    return NetParams.from_vector(theta, cfg.n_blocks)


def train(y: Sinogram, geom: Geometry, grid: Grid, cfg: TrainConfig | None = None, params: NetParams | None = None,
          progress=None):
    """Fit the network to the zero-shot pair built from ``y``.

    Returns ``(params, losses)`` where ``losses[e]`` is the loss evaluated in
    epoch ``e`` before that epoch's update.
    """
    cfg = cfg or TrainConfig()
    y_l, x_ref = build_zsl_pair(y, geom, grid, cfg.noise_std, cfg.seed)
    if params is None:
        params = init_params(cfg.seed, cfg.init_std, cfg.n_blocks, cfg.lambda_init)
    theta = params.to_vector()
    if cfg.shared_blocks:
        theta = theta[: BlockParams.SIZE].copy()
    names = param_names(1 if cfg.shared_blocks else cfg.n_blocks)
    state = AdamState.zeros(theta.size)
    inputs = net_inputs_array(y_l.data, geom, grid.n, grid.pixel_size)
    losses = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        net = _expand(theta, cfg)
        x_h, tape = net_forward_array(y_l.data, net, geom, grid.n, grid.pixel_size, inputs,
                                     cfg.residual_lift)
        loss, g_x = joint_loss_and_grad(x_h, x_ref.data, cfg)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        losses.append(loss)
        grad = net_backward(tape, g_x).to_vector()
        if cfg.shared_blocks:
            grad = grad.reshape(cfg.n_blocks, -1).sum(axis=0)
        theta, state = adam_step(theta, grad, state, cfg, epoch, names)
        if progress is not None:
            progress(epoch, loss)
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d loss %.6g (%.1fs)", epoch, loss, time.perf_counter() - t0)
    return _expand(theta, cfg), losses


def reconstruct(y: Sinogram, params: NetParams, geom: Geometry, grid2x: Grid) -> Image:
    """Run the trained network on the acquired sinogram itself.

    ``geom`` describes ``y``; the network works on a detector with twice the
    bins at half the pitch and writes onto ``grid2x``.
    """
    if y.data.shape != geom.shape:
        raise ValueError(f"sinogram shape {y.data.shape} does not match geometry {geom.shape}")
    x, _ = net_forward_array(y.data, params, geom.higher(), grid2x.n, grid2x.pixel_size)
    return Image(x, grid2x.pixel_size)
