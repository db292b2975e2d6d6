"""Small zero-padded "same" convolutions used inside the network.

Sinogram kernels are 1 x 3 and act along the detector axis of every view;
image kernels are 3 x 3.  All functions use true convolution (kernel flipped),
so the transpose of ``conv(., k)`` is ``conv(., rotate180(k))``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .geometry import Image, Sinogram


def rotate180(k: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(k)[::-1, ::-1] if np.ndim(k) == 2 else np.asarray(k)[::-1])


def _check_kernel(k: np.ndarray, ndim: int) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.shape != (3,) * ndim:
        raise ValueError(f"expected a {'x'.join(['3'] * ndim)} kernel, got shape {k.shape}")
    return k


def conv1d(s: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Convolve every row of ``s`` with the 3-tap kernel ``k``."""
    k = _check_kernel(k, 1)
    n = s.shape[-1]
    sp = np.pad(s, ((0, 0), (1, 1)))
    out = k[0] * sp[:, 2 : 2 + n]
    out += k[1] * sp[:, 1 : 1 + n]
    out += k[2] * sp[:, 0:n]
    return out


def conv1d_adjoint(s: np.ndarray, k: np.ndarray) -> np.ndarray:
    return conv1d(s, rotate180(k))


def conv1d_kernel_grad(x: np.ndarray, g_out: np.ndarray) -> np.ndarray:
    """Gradient of ``<g_out, conv1d(x, k)>`` with respect to ``k``."""
    n = x.shape[-1]
    xp = np.pad(x, ((0, 0), (1, 1)))
    return np.array([np.vdot(g_out, xp[:, 2 - a : 2 - a + n]) for a in range(3)])


@njit(cache=True)
def _conv2d(x, k, out):
    h, w = x.shape
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(3):
                ii = i + 1 - a
                if 0 <= ii < h:
                    for b in range(3):
                        jj = j + 1 - b
                        if 0 <= jj < w:
                            acc += k[a, b] * x[ii, jj]
            out[i, j] = acc


@njit(cache=True)
def _conv2d_kernel_grad(x, g, grad):
    h, w = x.shape
    for a in range(3):
        for b in range(3):
            acc = 0.0
            for i in range(max(0, a - 1), min(h, h + a - 1)):
                ii = i + 1 - a
                for j in range(max(0, b - 1), min(w, w + b - 1)):
                    acc += g[i, j] * x[ii, j + 1 - b]
            grad[a, b] = acc


def conv2d(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """2-D convolution with a 3 x 3 kernel, output the size of ``x``."""
    k = _check_kernel(k, 2)
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(x.shape)
    _conv2d(x, np.ascontiguousarray(k), out)
    return out


def conv2d_adjoint(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    return conv2d(x, rotate180(k))


def conv2d_kernel_grad(x: np.ndarray, g_out: np.ndarray) -> np.ndarray:
    """Gradient of ``<g_out, conv2d(x, k)>`` with respect to ``k``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    g_out = np.ascontiguousarray(g_out, dtype=np.float64)
    if x.shape != g_out.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {g_out.shape}")
    grad = np.empty((3, 3))
    _conv2d_kernel_grad(x, g_out, grad)
    return grad


def conv_sino(s: Sinogram, k) -> Sinogram:
    return Sinogram(conv1d(s.data, k), s.det_spacing)


def conv_adjoint_sino(s: Sinogram, k) -> Sinogram:
    return Sinogram(conv1d_adjoint(s.data, k), s.det_spacing)


def conv_img(x: Image, k) -> Image:
    return Image(conv2d(x.data, k), x.pixel_size)


def conv_adjoint_img(x: Image, k) -> Image:
    return Image(conv2d_adjoint(x.data, k), x.pixel_size)


def conv_kernel_grad(x, g_out) -> np.ndarray:
    """Kernel gradient for either a sinogram (1 x 3) or an image (3 x 3) convolution."""
    if isinstance(x, Sinogram):
        return conv1d_kernel_grad(x.data, np.asarray(getattr(g_out, "data", g_out)))
    if isinstance(x, Image):
        return conv2d_kernel_grad(x.data, np.asarray(getattr(g_out, "data", g_out)))
    raise TypeError(f"expected Image or Sinogram, got {type(x).__name__}")
