"""Parallel-beam projector pair, ramp filter and filtered back-projection.

The projector is Joseph-style: every ray is stepped one pixel row (or column,
whichever direction the ray crosses faster) at a time and the image is linearly
interpolated between the two neighbouring pixels.  ``back_project`` scatters with
the very same weights, so it is the exact transpose of ``forward_project``.
Each output element of either kernel is written by a single thread in a fixed
order, so results do not depend on the thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange
from scipy.signal import fftconvolve

from .geometry import Geometry, Grid, Image, Sinogram


@njit(cache=True)
def _ray_line(ct, st, s, c, ps):
    """Padded-grid coordinate of the ray along its fast axis: ``base + k * slope``.

    Column-major rays (|sin| >= |cos|) are parameterized by column ``k`` and give a
    row coordinate; row-major rays the other way round.
    """
    if abs(st) >= abs(ct):
        slope = ct / st
        base = c - s / (st * ps) - c * slope + 1.0
        return True, base, slope, ps / abs(st)
    slope = st / ct
    base = c + s / (ct * ps) - c * slope + 1.0
    return False, base, slope, ps / abs(ct)


@njit(cache=True)
def _span(base, slope, n, count):
    # indices k < count whose coordinate base + k*slope lands in [0, n + 1),
    # widened by two on each side; the exact test happens per sample
    if slope != 0.0:
        ka = (0.0 - base) / slope
        kb = (n + 1.0 - base) / slope
        if ka > kb:
            ka, kb = kb, ka
        ka = max(ka, -1.0)
        kb = min(kb, float(count))
        return max(0, int(math.floor(ka)) - 2), min(count - 1, int(math.ceil(kb)) + 2)
    if base < 0.0 or base >= n + 1.0:
        return 0, -1
    return 0, count - 1


@njit(parallel=True, cache=True)
def _project(imgp, cos_t, sin_t, s0, ds, ps, out):
    n = imgp.shape[0] - 2
    n_views, n_det = out.shape
    c = (n - 1) / 2.0
    for v in prange(n_views):
        ct = cos_t[v]
        st = sin_t[v]
        for d in range(n_det):
            by_col, base, slope, w = _ray_line(ct, st, s0 + d * ds, c, ps)
            lo, hi = _span(base, slope, n, n)
            acc = 0.0
            for k in range(lo, hi + 1):
                r = base + k * slope
                i0 = math.floor(r)
                if i0 < 0 or i0 > n:
                    continue
                fr = r - i0
                if by_col:
                    acc += (1.0 - fr) * imgp[i0, k + 1] + fr * imgp[i0 + 1, k + 1]
                else:
                    acc += (1.0 - fr) * imgp[k + 1, i0] + fr * imgp[k + 1, i0 + 1]
            out[v, d] = acc * w


@njit(parallel=True, cache=True)
def _backproject(sino, cos_t, sin_t, s0, ds, ps, outp, outp_t):
    # column-major rays accumulate into the transposed buffer for contiguous writes
    n = outp.shape[0] - 2
    n_views, n_det = sino.shape
    c = (n - 1) / 2.0
    for v in range(n_views):
        ct = cos_t[v]
        st = sin_t[v]
        by_col, base0, slope, w = _ray_line(ct, st, s0, c, ps)
        _, base1, _, _ = _ray_line(ct, st, s0 + ds, c, ps)
        dbase = base1 - base0
        acc = outp_t if by_col else outp
        bases = np.empty(n_det)
        for d in range(n_det):
            bases[d] = _ray_line(ct, st, s0 + d * ds, c, ps)[1]
        # line k of the fast axis is owned by one iteration
        for k in prange(n):
            lo, hi = _span(base0 + k * slope, dbase, n, n_det)
            for d in range(lo, hi + 1):
                r = bases[d] + k * slope
                i0 = math.floor(r)
                if i0 < 0 or i0 > n:
                    continue
                fr = r - i0
                val = sino[v, d] * w
                acc[k + 1, i0] += (1.0 - fr) * val
                acc[k + 1, i0 + 1] += fr * val


def _trig(geom: Geometry):
    a = geom.angle_array
    return np.cos(a), np.sin(a)


def _first_bin(geom: Geometry) -> float:
    return (-(geom.n_det - 1) / 2.0 + geom.det_center_offset) * geom.det_spacing


def project_array(img: np.ndarray, geom: Geometry, pixel_size: float) -> np.ndarray:
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1] or img.shape[0] < 2:
        raise ValueError(f"expected a square image with n >= 2, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    out = np.empty(geom.shape)
    cos_t, sin_t = _trig(geom)
    imgp = np.pad(img, 1)
    _project(imgp, cos_t, sin_t, _first_bin(geom), geom.det_spacing, float(pixel_size), out)
    return out


def backproject_array(sino: np.ndarray, geom: Geometry, n: int, pixel_size: float) -> np.ndarray:
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    if sino.shape != geom.shape:
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry {geom.shape}")
    outp = np.zeros((n + 2, n + 2))
    outp_t = np.zeros((n + 2, n + 2))
    cos_t, sin_t = _trig(geom)
    _backproject(sino, cos_t, sin_t, _first_bin(geom), geom.det_spacing, float(pixel_size), outp, outp_t)
    return outp[1:-1, 1:-1] + outp_t.T[1:-1, 1:-1]


def ramp_kernel(n_det: int, det_spacing: float) -> np.ndarray:
    """Spatial Ram-Lak taps for offsets ``-(n_det-1) .. n_det-1``."""
    k = np.arange(-(n_det - 1), n_det)
    h = np.zeros(k.shape)
    h[k == 0] = 1.0 / (4.0 * det_spacing**2)
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd] * det_spacing) ** 2
    return h


def ramp_filter_array(sino: np.ndarray, det_spacing: float) -> np.ndarray:
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape[1] < 2:
        raise ValueError("ramp filter needs at least two detector bins")
    h = ramp_kernel(sino.shape[1], det_spacing)
    return fftconvolve(sino, h[None, :], mode="same", axes=1)


def fbp_scale(geom: Geometry, pixel_size: float) -> float:
    # pi/V for the angular integral; det_spacing**2 / pixel_size**2 undoes the
    # pixel footprint carried by the adjoint and supplies the filter's sample width
    return np.pi / geom.n_views * geom.det_spacing**2 / pixel_size**2


def fbp_array(sino: np.ndarray, geom: Geometry, n: int, pixel_size: float) -> np.ndarray:
    filtered = ramp_filter_array(sino, geom.det_spacing)
    return fbp_scale(geom, pixel_size) * backproject_array(filtered, geom, n, pixel_size)


def fbp_adjoint_array(img: np.ndarray, geom: Geometry, pixel_size: float) -> np.ndarray:
    """Transpose of :func:`fbp_array` (the ramp filter is symmetric)."""
    proj = project_array(img, geom, pixel_size)
    return fbp_scale(geom, pixel_size) * ramp_filter_array(proj, geom.det_spacing)


def _check_sino(sino: Sinogram, geom: Geometry):
    if sino.data.shape != geom.shape:
        raise ValueError(f"sinogram shape {sino.data.shape} does not match geometry {geom.shape}")


def forward_project(img: Image, geom: Geometry) -> Sinogram:
    """Line integrals of ``img`` along every ray of ``geom``."""
    return Sinogram(project_array(img.data, geom, img.pixel_size), geom.det_spacing)


def back_project(sino: Sinogram, geom: Geometry, n: int, pixel_size: float) -> Image:
    _check_sino(sino, geom)
    return Image(backproject_array(sino.data, geom, n, pixel_size), pixel_size)


def ramp_filter(sino: Sinogram) -> Sinogram:
    return Sinogram(ramp_filter_array(sino.data, sino.det_spacing), sino.det_spacing)


def fbp(sino: Sinogram, geom: Geometry, n: int | Grid, pixel_size: float | None = None) -> Image:
    """Filtered back-projection onto an ``n`` x ``n`` grid."""
    if isinstance(n, Grid):
        n, pixel_size = n.n, n.pixel_size
    _check_sino(sino, geom)
    return Image(fbp_array(sino.data, geom, n, pixel_size), pixel_size)
