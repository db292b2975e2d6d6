"""Fields-of-Experts regulariser with Gaussian-mixture influence functions.

Each of the K channels filters the image with a cascade of three 3 x 3 kernels,
passes the response through ``phi(x) = sum_n gamma_n exp(-(x - mu_n)^2 / (2 delta_n))``
and maps the result back with the rotated kernels.  Only ``phi`` (the derivative
of the channel penalty) is ever evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv import conv2d, conv2d_adjoint, conv2d_kernel_grad, rotate180
from .geometry import Image

N_GAUSSIANS = 4
N_CHANNELS = 4


@dataclass
class GmmParams:
    gamma: np.ndarray
    mu: np.ndarray
    log_delta: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_delta = np.asarray(self.log_delta, dtype=np.float64)
        if not (self.gamma.shape == self.mu.shape == self.log_delta.shape) or self.gamma.ndim != 1:
            raise ValueError("gamma, mu and log_delta must be 1-D arrays of equal length")

    @property
    def delta(self) -> np.ndarray:
        return np.exp(self.log_delta)

    @classmethod
    def zeros(cls, n=N_GAUSSIANS):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


@dataclass
class FoeChannel:
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    gmm: GmmParams = field(default_factory=GmmParams.zeros)

    def __post_init__(self):
        for name in ("g1", "g2", "g3"):
            k = np.asarray(getattr(self, name), dtype=np.float64)
            if k.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3, got {k.shape}")
            setattr(self, name, k)

    @property
    def kernels(self):
        return (self.g1, self.g2, self.g3)


def _components(x, p: GmmParams):
    # shape (N, *x.shape)
    diff = x[None, ...] - p.mu.reshape((-1,) + (1,) * np.ndim(x))
    delta = p.delta.reshape((-1,) + (1,) * np.ndim(x))
    return diff, delta, np.exp(-(diff * diff) / (2.0 * delta))


def gmm_phi(x, p: GmmParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape)
    delta = p.delta
    for g, m, d in zip(p.gamma, p.mu, delta):
        out += g * np.exp(-((x - m) ** 2) / (2.0 * d))
    return out


def gmm_phi_grads(x, p: GmmParams):
    """Elementwise partials of ``phi``: (d/dx, d/dgamma, d/dmu, d/dlog_delta).

    Parameter partials carry a leading axis over the mixture components.
    """
    x = np.asarray(x, dtype=np.float64)
    diff, delta, e = _components(x, p)
    gamma = p.gamma.reshape((-1,) + (1,) * x.ndim)
    ge = gamma * e
    d_mu = ge * diff / delta
    d_x = -d_mu.sum(axis=0)
    d_logdelta = ge * diff * diff / (2.0 * delta)
    return d_x, e, d_mu, d_logdelta


def channel_forward(x: np.ndarray, ch: FoeChannel):
    """One channel's contribution plus the intermediates its backward pass needs."""
    z1 = conv2d(x, ch.g1)
    z2 = conv2d(z1, ch.g2)
    z3 = conv2d(z2, ch.g3)
    f = gmm_phi(z3, ch.gmm)
    h3 = conv2d_adjoint(f, ch.g3)
    h2 = conv2d_adjoint(h3, ch.g2)
    h1 = conv2d_adjoint(h2, ch.g1)
    return h1, (x, z1, z2, z3, f, h3, h2)


def channel_backward(g_out: np.ndarray, ch: FoeChannel, cache):
    """Returns (dL/dx, kernel grads (3, 3, 3), dgamma, dmu, dlog_delta)."""
    x, z1, z2, z3, f, h3, h2 = cache
    dk = np.zeros((3, 3, 3))
    # the adjoint cascade: conv with rotate180(g) is transposed by conv with g
    g_h2 = conv2d(g_out, ch.g1)
    dk[0] += rotate180(conv2d_kernel_grad(h2, g_out))
    g_h3 = conv2d(g_h2, ch.g2)
    dk[1] += rotate180(conv2d_kernel_grad(h3, g_h2))
    g_f = conv2d(g_h3, ch.g3)
    dk[2] += rotate180(conv2d_kernel_grad(f, g_h3))

    d_x, d_gamma, d_mu, d_logdelta = gmm_phi_grads(z3, ch.gmm)
    axes = tuple(range(1, d_gamma.ndim))
    grad_gamma = (d_gamma * g_f).sum(axis=axes)
    grad_mu = (d_mu * g_f).sum(axis=axes)
    grad_logdelta = (d_logdelta * g_f).sum(axis=axes)

    g_z3 = g_f * d_x
    dk[2] += conv2d_kernel_grad(z2, g_z3)
    g_z2 = conv2d_adjoint(g_z3, ch.g3)
    dk[1] += conv2d_kernel_grad(z1, g_z2)
    g_z1 = conv2d_adjoint(g_z2, ch.g2)
    dk[0] += conv2d_kernel_grad(x, g_z1)
    g_x = conv2d_adjoint(g_z1, ch.g1)
    return g_x, dk, grad_gamma, grad_mu, grad_logdelta


def foe_apply_array(x: np.ndarray, channels) -> np.ndarray:
    out = np.zeros(x.shape)
    for ch in channels:
        out += channel_forward(x, ch)[0]
    return out


def foe_apply(x: Image, channels) -> Image:
    """Sum over channels of the filtered, mixture-shaped and back-filtered responses."""
    if len(channels) != N_CHANNELS:
        raise ValueError(f"expected {N_CHANNELS} channels, got {len(channels)}")
    return Image(foe_apply_array(x.data, channels), x.pixel_size)
