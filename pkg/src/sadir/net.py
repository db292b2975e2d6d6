"""The unrolled super-resolution / deblur network and its reverse-mode gradients.

Each block performs one projected gradient step

    x+ = max(0, x - l1 * F(C'(U(D(C A x) - y))) - l2 * B'(B x - x_lr) - l3 * sum_k G_k'(phi_k(G_k x)))

where A is the fine-detector projector, F filtered back-projection, C/B the
sinogram/image kernel cascades (primes are the rotated, i.e. transposed,
cascades), D/U the detector down/up-samplers and G_k, phi_k the FoE channels.
The forward pass records every intermediate on a tape; ``net_backward`` walks
the tape in reverse using the transposes of the linear operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .conv import (
    conv1d,
    conv1d_adjoint,
    conv1d_kernel_grad,
    conv2d,
    conv2d_adjoint,
    conv2d_kernel_grad,
    rotate180,
)
from .foe import N_CHANNELS, N_GAUSSIANS, FoeChannel, GmmParams, channel_backward, channel_forward
from .geometry import Geometry, Grid, Image, Sinogram
from .resample import downsample_adjoint_array, downsample_array, upsample_adjoint_array, upsample_array
from .tomo import backproject_array, fbp_adjoint_array, fbp_array, project_array

N_BLOCKS = 3
LAMBDA_INIT = 0.1
MU_SPAN = 0.01
DELTA_INIT = 1e-4


@dataclass
class BlockParams:
    lambda1: float
    lambda2: float
    lambda3: float
    c: np.ndarray  # (3, 3): rows are c1, c2, c3
    b: np.ndarray  # (3, 3, 3): b1, b2, b3
    channels: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).reshape(3, 3)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(3, 3, 3)
        self.lambda1, self.lambda2, self.lambda3 = (float(v) for v in (self.lambda1, self.lambda2, self.lambda3))

    SIZE = 3 + 9 + 27 + N_CHANNELS * (27 + 3 * N_GAUSSIANS)

    def to_vector(self) -> np.ndarray:
        parts = [np.array([self.lambda1, self.lambda2, self.lambda3]), self.c.ravel(), self.b.ravel()]
        for ch in self.channels:
            parts += [ch.g1.ravel(), ch.g2.ravel(), ch.g3.ravel()]
            parts += [ch.gmm.gamma, ch.gmm.mu, ch.gmm.log_delta]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, v) -> "BlockParams":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (cls.SIZE,):
            raise ValueError(f"block vector must have {cls.SIZE} entries, got {v.shape}")
        lam = v[:3]
        c = v[3:12]
        b = v[12:39]
        channels = []
        pos = 39
        for _ in range(N_CHANNELS):
            g = v[pos : pos + 27].reshape(3, 3, 3)
            pos += 27
            gmm = GmmParams(*(v[pos + i * N_GAUSSIANS : pos + (i + 1) * N_GAUSSIANS] for i in range(3)))
            pos += 3 * N_GAUSSIANS
            channels.append(FoeChannel(g[0], g[1], g[2], gmm))
        return cls(lam[0], lam[1], lam[2], c, b, channels)


@dataclass
class NetParams:
    blocks: list

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise ValueError("network needs at least one block")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([b.to_vector() for b in self.blocks])

    @classmethod
    def from_vector(cls, v, n_blocks: int = N_BLOCKS) -> "NetParams":
        v = np.asarray(v, dtype=np.float64)
        if v.size != n_blocks * BlockParams.SIZE:
            raise ValueError(f"expected {n_blocks * BlockParams.SIZE} scalars, got {v.size}")
        return cls([BlockParams.from_vector(part) for part in v.reshape(n_blocks, -1)])

    @property
    def size(self) -> int:
        return len(self.blocks) * BlockParams.SIZE

    def copy(self) -> "NetParams":
        return NetParams.from_vector(self.to_vector(), len(self.blocks))


def param_names(n_blocks: int = N_BLOCKS) -> list[str]:
    """Human-readable path of every scalar, in :meth:`NetParams.to_vector` order."""
    names = []
    for t in range(n_blocks):
        names += [f"block{t}.lambda{i}" for i in (1, 2, 3)]
        names += [f"block{t}.c{i}[{a}]" for i in (1, 2, 3) for a in range(3)]
        names += [f"block{t}.b{i}[{a},{c}]" for i in (1, 2, 3) for a in range(3) for c in range(3)]
        for k in range(N_CHANNELS):
            names += [f"block{t}.ch{k}.g{i}[{a},{c}]" for i in (1, 2, 3) for a in range(3) for c in range(3)]
            for p in ("gamma", "mu", "log_delta"):
                names += [f"block{t}.ch{k}.{p}[{n}]" for n in range(N_GAUSSIANS)]
    return names


def init_params(seed: int, std: float = 0.05, n_blocks: int = N_BLOCKS, lambda_init: float = LAMBDA_INIT) -> NetParams:
    """Gaussian kernels and mixture weights; fixed mixture centres and widths."""
    per_block = 9 + 27 + N_CHANNELS * (27 + N_GAUSSIANS)
    draws = rng.gaussians(seed, n_blocks * per_block, std).reshape(n_blocks, per_block)
    mu = np.linspace(-MU_SPAN, MU_SPAN, N_GAUSSIANS)
    log_delta = np.full(N_GAUSSIANS, np.log(DELTA_INIT))
    blocks = []
    for t in range(n_blocks):
        d = draws[t]
        channels = []
        pos = 36
        for _ in range(N_CHANNELS):
            g = d[pos : pos + 27].reshape(3, 3, 3)
            gamma = d[pos + 27 : pos + 27 + N_GAUSSIANS]
            pos += 27 + N_GAUSSIANS
            channels.append(FoeChannel(g[0], g[1], g[2], GmmParams(gamma, mu.copy(), log_delta.copy())))
        blocks.append(BlockParams(lambda_init, lambda_init, lambda_init, d[:9], d[9:36], channels))
    return NetParams(blocks)


# --- single block -------------------------------------------------------------


RESIDUAL_LIFTS = ("upsample", "transpose")


def _lift(resid, lift):
    """Bring the coarse residual back to the fine detector (bilinear, or the exact transpose of sampling)."""
    if lift == "upsample":
        return upsample_array(resid)
    if lift == "transpose":
        return downsample_adjoint_array(resid)
    raise ValueError(f"residual lift must be one of {RESIDUAL_LIFTS}, got {lift!r}")


def _lift_adjoint(g, lift):
    return upsample_adjoint_array(g) if lift == "upsample" else downsample_array(g)


def sr_fidelity_grad_array(x, y_l, p: BlockParams, geom: Geometry, pixel_size: float, cache=None, lift="upsample"):
    n = x.shape[0]
    proj = project_array(x, geom, pixel_size)
    fwd = [proj]
    for k in p.c:
        fwd.append(conv1d(fwd[-1], k))
    resid = downsample_array(fwd[-1]) - y_l
    bwd = [_lift(resid, lift)]
    for k in p.c[::-1]:
        bwd.append(conv1d_adjoint(bwd[-1], k))
    out = fbp_array(bwd[-1], geom, n, pixel_size)
    if cache is not None:
        cache["sr_fwd"] = fwd
        cache["sr_bwd"] = bwd
    return out


def deblur_fidelity_grad_array(x, x_l, p: BlockParams, cache=None):
    fwd = [x]
    for k in p.b:
        fwd.append(conv2d(fwd[-1], k))
    bwd = [fwd[-1] - x_l]
    for k in p.b[::-1]:
        bwd.append(conv2d_adjoint(bwd[-1], k))
    if cache is not None:
        cache["db_fwd"] = fwd
        cache["db_bwd"] = bwd
    return bwd[-1]


def foe_term_array(x, p: BlockParams, cache=None):
    out = np.zeros(x.shape)
    caches = []
    for ch in p.channels:
        h, c = channel_forward(x, ch)
        out += h
        caches.append(c)
    if cache is not None:
        cache["foe"] = caches
    return out


def block_forward(x, y_l, x_l, p: BlockParams, geom: Geometry, pixel_size: float, lift="upsample"):
    cache = {"lift": lift}
    g_sr = sr_fidelity_grad_array(x, y_l, p, geom, pixel_size, cache, lift)
    g_db = deblur_fidelity_grad_array(x, x_l, p, cache)
    g_foe = foe_term_array(x, p, cache)
    pre = x - p.lambda1 * g_sr - p.lambda2 * g_db - p.lambda3 * g_foe
    cache.update(g_sr=g_sr, g_db=g_db, g_foe=g_foe, active=pre > 0)
    return np.maximum(pre, 0.0), cache


def block_backward(g_out, p: BlockParams, cache, geom: Geometry, pixel_size: float, need_input_grad=True):
    """Returns (dL/dx_t or None, gradient of the block's parameters as BlockParams)."""
    n = g_out.shape[0]
    g_pre = np.where(cache["active"], g_out, 0.0)
    grad_lam = [-np.vdot(g_pre, cache[key]) for key in ("g_sr", "g_db", "g_foe")]
    g_x = g_pre.copy() if need_input_grad else None

    # sinogram-domain fidelity
    dc = np.zeros((3, 3))
    fwd, bwd = cache["sr_fwd"], cache["sr_bwd"]
    g = fbp_adjoint_array(-p.lambda1 * g_pre, geom, pixel_size)
    for step in range(3, 0, -1):  # bwd[step] = conv1d_adjoint(bwd[step - 1], c[3 - step])
        j = 3 - step
        dc[j] += rotate180(conv1d_kernel_grad(bwd[step - 1], g))
        g = conv1d(g, p.c[j])
    g = downsample_adjoint_array(_lift_adjoint(g, cache["lift"]))
    for j in range(2, -1, -1):  # fwd[j + 1] = conv1d(fwd[j], c[j])
        dc[j] += conv1d_kernel_grad(fwd[j], g)
        g = conv1d_adjoint(g, p.c[j])
    if need_input_grad:
        g_x += backproject_array(g, geom, n, pixel_size)

    # image-domain deblur fidelity
    db = np.zeros((3, 3, 3))
    fwd, bwd = cache["db_fwd"], cache["db_bwd"]
    g = -p.lambda2 * g_pre
    for step in range(3, 0, -1):
        j = 3 - step
        db[j] += rotate180(conv2d_kernel_grad(bwd[step - 1], g))
        g = conv2d(g, p.b[j])
    for j in range(2, -1, -1):
        db[j] += conv2d_kernel_grad(fwd[j], g)
        g = conv2d_adjoint(g, p.b[j])
    if need_input_grad:
        g_x += g

    # FoE prior
    g = -p.lambda3 * g_pre
    channels = []
    for ch, c in zip(p.channels, cache["foe"]):
        gx_k, dk, dgamma, dmu, dlogdelta = channel_backward(g, ch, c)
        if need_input_grad:
            g_x += gx_k
        channels.append(FoeChannel(dk[0], dk[1], dk[2], GmmParams(dgamma, dmu, dlogdelta)))

    return g_x, BlockParams(grad_lam[0], grad_lam[1], grad_lam[2], dc, db, channels)


# --- whole network ------------------------------------------------------------


@dataclass
class Tape:
    caches: list
    params: NetParams
    geom: Geometry
    pixel_size: float
    x0: np.ndarray
    x_l: np.ndarray


def _check_input(y_l: np.ndarray, geom: Geometry):
    lr = geom.lower()
    if y_l.shape != lr.shape:
        raise ValueError(f"coarse sinogram shape {y_l.shape} does not match {lr.shape} for this geometry")
    return lr


def init_input_array(y_l, geom: Geometry, n: int, pixel_size: float) -> np.ndarray:
    _check_input(y_l, geom)
    return fbp_array(upsample_array(y_l), geom, n, pixel_size)


def init_input(y_l: Sinogram, hr_geom: Geometry, n: int | Grid, pixel_size: float | None = None) -> Image:
    """FBP of the linearly up-sampled coarse sinogram: the network's starting image."""
    if isinstance(n, Grid):
        n, pixel_size = n.n, n.pixel_size
    return Image(init_input_array(y_l.data, hr_geom, n, pixel_size), pixel_size)


def net_inputs_array(y_l, geom: Geometry, n: int, pixel_size: float):
    """The parameter-free images every forward pass starts from: ``(x0, x_l)``."""
    y_l = np.ascontiguousarray(y_l, dtype=np.float64)
    lr = _check_input(y_l, geom)
    return fbp_array(upsample_array(y_l), geom, n, pixel_size), fbp_array(y_l, lr, n, pixel_size)


def net_forward_array(y_l, params: NetParams, geom: Geometry, n: int, pixel_size: float, inputs=None,
                      lift="upsample"):
    """``inputs`` may carry a precomputed ``net_inputs_array`` result to skip two reconstructions.

    ``lift`` selects how the coarse sinogram residual returns to the fine
    detector: ``"upsample"`` (bilinear, the default) or ``"transpose"`` (zero-fill,
    the exact adjoint of the stride-2 sampling).
    """
    y_l = np.ascontiguousarray(y_l, dtype=np.float64)
    _check_input(y_l, geom)
    x0, x_l = inputs if inputs is not None else net_inputs_array(y_l, geom, n, pixel_size)
    x = x0
    caches = []
    for p in params.blocks:
        x, cache = block_forward(x, y_l, x_l, p, geom, pixel_size, lift)
        caches.append(cache)
    return x, Tape(caches, params, geom, pixel_size, x0, x_l)


def net_forward(y_l: Sinogram, params: NetParams, geom: Geometry, grid: Grid):
    """Reconstruct ``y_l`` (coarse detector of ``geom``) onto ``grid``; returns (image, tape)."""
    x, tape = net_forward_array(y_l.data, params, geom, grid.n, grid.pixel_size)
    return Image(x, grid.pixel_size), tape


def net_backward(tape: Tape, g_out) -> NetParams:
    """Gradient of a scalar loss w.r.t. every parameter, given dL/d(output)."""
    g = np.asarray(getattr(g_out, "data", g_out), dtype=np.float64)
    if len(tape.caches) != len(tape.params.blocks):
        raise ValueError("tape does not match its parameters")
    grads = [None] * len(tape.caches)
    for t in range(len(tape.caches) - 1, -1, -1):
        g, grads[t] = block_backward(
            g, tape.params.blocks[t], tape.caches[t], tape.geom, tape.pixel_size, need_input_grad=t > 0
        )
    return NetParams(grads)


# --- Image-level wrappers for the individual terms ----------------------------


def sr_fidelity_grad(x_t: Image, y_l: Sinogram, p: BlockParams, hr_geom: Geometry) -> Image:
    return Image(sr_fidelity_grad_array(x_t.data, y_l.data, p, hr_geom, x_t.pixel_size), x_t.pixel_size)


def deblur_fidelity_grad(x_t: Image, x_l: Image, p: BlockParams) -> Image:
    if x_t.data.shape != x_l.data.shape:
        raise ValueError("deblur term needs both images on the same grid")
    return Image(deblur_fidelity_grad_array(x_t.data, x_l.data, p), x_t.pixel_size)


def sadir_block(x_t: Image, y_l: Sinogram, x_l: Image, p: BlockParams, hr_geom: Geometry) -> Image:
    out, _ = block_forward(x_t.data, y_l.data, x_l.data, p, hr_geom, x_t.pixel_size)
    return Image(out, x_t.pixel_size)
