"""Factor-2 resampling along the detector axis and the matching transposes.

Coarse bin ``d`` is aligned with fine bin ``2d`` (see :meth:`Geometry.lower`), so
down-sampling is plain stride-2 selection and up-sampling keeps the coarse
samples at even positions with midpoints in between.
"""

from __future__ import annotations

import numpy as np

from .geometry import Sinogram


def downsample_array(y: np.ndarray) -> np.ndarray:
    if y.shape[-1] % 2:
        raise ValueError(f"down-sampling needs an even detector count, got {y.shape[-1]}")
    return np.ascontiguousarray(y[..., 0::2])


def downsample_adjoint_array(y: np.ndarray) -> np.ndarray:
    out = np.zeros(y.shape[:-1] + (2 * y.shape[-1],))
    out[..., 0::2] = y
    return out


def upsample_array(y: np.ndarray) -> np.ndarray:
    m = y.shape[-1]
    if m < 2:
        raise ValueError("up-sampling needs at least two detector bins")
    out = np.empty(y.shape[:-1] + (2 * m,))
    out[..., 0::2] = y
    out[..., 1:-1:2] = 0.5 * (y[..., :-1] + y[..., 1:])
    out[..., -1] = y[..., -1]
    return out


def upsample_adjoint_array(g: np.ndarray) -> np.ndarray:
    if g.shape[-1] % 2:
        raise ValueError(f"expected an even detector count, got {g.shape[-1]}")
    odd = g[..., 1::2]
    out = g[..., 0::2].copy()
    out[..., :-1] += 0.5 * odd[..., :-1]
    out[..., 1:] += 0.5 * odd[..., :-1]
    out[..., -1] += odd[..., -1]
    return out


def downsample_det(sino: Sinogram) -> Sinogram:
    """Keep every second detector bin."""
    return Sinogram(downsample_array(sino.data), sino.det_spacing * 2.0)


def upsample_det(sino: Sinogram) -> Sinogram:
    """Linear interpolation to twice the bins; the last bin is replicated."""
    return Sinogram(upsample_array(sino.data), sino.det_spacing / 2.0)


def downsample_adjoint(sino: Sinogram) -> Sinogram:
    return Sinogram(downsample_adjoint_array(sino.data), sino.det_spacing / 2.0)


def upsample_adjoint(sino: Sinogram) -> Sinogram:
    return Sinogram(upsample_adjoint_array(sino.data), sino.det_spacing * 2.0)
