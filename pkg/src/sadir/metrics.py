"""Image quality measures: RMSE, windowed SSIM, edge-method MTF and interpolation baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Image

WATER_60KEV = 0.0205
L_RANGE = 0.082  # four times water at 60 keV, mm^-1


def _data(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def rmse(a, b) -> float:
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


# --- SSIM ---------------------------------------------------------------------


def _box_valid(a: np.ndarray, w: int) -> np.ndarray:
    """Sum over every w x w window lying fully inside ``a``."""
    c = np.cumsum(np.pad(a, ((1, 0), (0, 0))), axis=0)
    a = c[w:] - c[:-w]
    c = np.cumsum(np.pad(a, ((0, 0), (1, 0))), axis=1)
    return c[:, w:] - c[:, :-w]


def _box_valid_adjoint(b: np.ndarray, w: int) -> np.ndarray:
    return _box_valid(np.pad(b, w - 1), w)


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    eps1: float = 0.01
    eps2: float = 0.03
    data_range: float = L_RANGE

    @property
    def c1(self) -> float:
        return (self.eps1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.eps2 * self.data_range) ** 2


def _ssim_terms(p, q, cfg: SsimConfig):
    w = cfg.window
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if w % 2 == 0 or w > min(p.shape):
        raise ValueError(f"window {w} must be odd and fit inside the image {p.shape}")
    area = float(w * w)
    mp = _box_valid(p, w) / area
    mq = _box_valid(q, w) / area
    epp = _box_valid(p * p, w) / area
    eqq = _box_valid(q * q, w) / area
    epq = _box_valid(p * q, w) / area
    n1 = 2.0 * mp * mq + cfg.c1
    d1 = mp * mp + mq * mq + cfg.c1
    n2 = 2.0 * (epq - mp * mq) + cfg.c2
    d2 = (epp - mp * mp) + (eqq - mq * mq) + cfg.c2
    return mp, mq, n1, d1, n2, d2


def ssim(p, q, cfg: SsimConfig | None = None) -> float:
    """Mean SSIM over all fully contained square windows (uniform weighting)."""
    cfg = cfg or SsimConfig()
    _, _, n1, d1, n2, d2 = _ssim_terms(_data(p), _data(q), cfg)
    return float(np.mean((n1 * n2) / (d1 * d2)))


def ssim_and_grad(p, q, cfg: SsimConfig | None = None):
    """SSIM and its gradient with respect to the first image."""
    cfg = cfg or SsimConfig()
    p, q = _data(p), _data(q)
    mp, mq, n1, d1, n2, d2 = _ssim_terms(p, q, cfg)
    num = n1 * n2
    den = d1 * d2
    s = num / den
    count = s.size
    area = float(cfg.window**2)
    # partials of each window's value w.r.t. the window statistics
    d_mp = ((2.0 * mq * n2 - 2.0 * mq * n1) - s * (2.0 * mp * d2 - 2.0 * mp * d1)) / den
    d_epp = -s / d2
    d_epq = 2.0 * n1 / den
    scale = 1.0 / (count * area)
    w = cfg.window
    grad = (
        _box_valid_adjoint(d_mp, w) + 2.0 * p * _box_valid_adjoint(d_epp, w) + q * _box_valid_adjoint(d_epq, w)
    ) * scale
    return float(np.mean(s)), grad


# --- MTF ----------------------------------------------------------------------


@dataclass
class MtfCurve:
    frequencies: np.ndarray  # cycles/mm
    values: np.ndarray

    def to_csv(self) -> str:
        return "".join(f"{f:.17g},{v:.17g}\n" for f, v in zip(self.frequencies, self.values))


def edge_spread(img, roi=None, edge_axis="vertical") -> np.ndarray:
    data = _data(img)
    if roi is not None:
        r0, r1, c0, c1 = roi
        data = data[r0:r1, c0:c1]
    if edge_axis == "vertical":
        return data.mean(axis=0), data
    if edge_axis == "horizontal":
        return data.mean(axis=1), data.T
    raise ValueError(f"edge_axis must be 'vertical' or 'horizontal', got {edge_axis!r}")


def mtf_edge(img, roi=None, edge_axis="vertical", pixel_size=None, pad_to=1024) -> MtfCurve:
    """Edge-method MTF.

    ``roi`` is ``(row0, row1, col0, col1)``.  A vertical edge (``edge_axis="vertical"``)
    varies along columns, so rows are averaged into the edge spread function.
    The LSF is the first difference of the ESF (centred between samples); its
    sinc response is divided out again after the transform.
    """
    if pixel_size is None:
        pixel_size = getattr(img, "pixel_size", 1.0)
    esf, block = edge_spread(img, roi, edge_axis)
    if esf.size < 8:
        raise ValueError("ROI too narrow for an edge measurement")
    quarter = max(1, esf.size // 4)
    contrast = abs(esf[-quarter:].mean() - esf[:quarter].mean())
    noise = float(np.std(block - esf[None, :]))
    if contrast <= 10.0 * noise or contrast <= 1e-12 * max(1.0, np.abs(esf).max()):
        raise ValueError(f"no usable edge in ROI: contrast {contrast:.3g} vs noise floor {noise:.3g}")

    lsf = np.diff(esf)
    peak = int(np.argmax(np.abs(lsf)))
    half = max(peak, lsf.size - 1 - peak) + 1
    offs = np.arange(lsf.size) - peak
    lsf = lsf * np.cos(np.pi * offs / (2.0 * half)) ** 2

    n_fft = max(int(pad_to), lsf.size)
    spectrum = np.abs(np.fft.rfft(lsf, n_fft))
    freq_px = np.fft.rfftfreq(n_fft)
    values = spectrum / spectrum[0] / np.sinc(freq_px)
    values[0] = 1.0
    return MtfCurve(freq_px / pixel_size, values)


def mtf_at(curve: MtfCurve, fraction: float) -> float:
    """Frequency of the first downward crossing of ``fraction`` (linear interpolation)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    v, f = curve.values, curve.frequencies
    below = np.nonzero(v <= fraction)[0]
    if below.size == 0:
        raise ValueError(f"curve never drops to {fraction}; minimum is {v.min():.4g}")
    i = below[0]
    if i == 0:
        return float(f[0])
    t = (v[i - 1] - fraction) / (v[i - 1] - v[i])
    return float(f[i - 1] + t * (f[i] - f[i - 1]))


# --- interpolation baselines --------------------------------------------------


def _cubic(x, a=-0.5):
    x = np.abs(x)
    return np.where(
        x <= 1,
        (a + 2) * x**3 - (a + 3) * x**2 + 1,
        np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0),
    )


def _upscale2_axis(x: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    idx = np.arange(n)
    out = np.empty((2 * n,) + x.shape[1:])
    # output samples sit a quarter input pixel either side of each input centre
    for phase, pos in ((0, -0.25), (1, 0.25)):
        acc = np.zeros(x.shape)
        for t in (-2, -1, 0, 1, 2):
            w = float(_cubic(pos - t))
            if w != 0.0:
                acc += w * x[np.clip(idx + t, 0, n - 1)]
        out[phase::2] = acc
    return np.moveaxis(out, 0, axis)


def bicubic_upscale2(img: Image) -> Image:
    """2x Catmull-Rom upscaling over the same field of view (edge pixels replicated)."""
    data = _upscale2_axis(_upscale2_axis(_data(img), 0), 1)
    return Image(data, getattr(img, "pixel_size", 1.0) / 2.0)


def nearest_upscale2(img: Image) -> Image:
    data = np.repeat(np.repeat(_data(img), 2, axis=0), 2, axis=1)
    return Image(data, getattr(img, "pixel_size", 1.0) / 2.0)
