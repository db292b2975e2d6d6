"""Deterministic test objects in attenuation units (mm^-1).

Every shape is rendered analytically on a 4x supersampled grid and box-averaged,
which gives anti-aliased boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Image
from .metrics import WATER_60KEV

SUPERSAMPLE = 4
MAX_MU = 0.1

# (value, a, b, x0, y0, phi_deg) in units of the half field of view
_SHEPP_LOGAN = [
    (2.00, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.98, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.01, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.01, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.01, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.01, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.605, 0.0),
]
# original Shepp-Logan soft tissue is 1.02; rescale it to water
_SL_SCALE = WATER_60KEV / 1.02


@dataclass
class PhantomSpec:
    kind: str
    n: int = 256
    pixel_size: float = 0.5
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("shepp_logan", "bar_pattern", "edge", "disk"):
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if self.n < 16:
            raise ValueError(f"phantom needs n >= 16, got {self.n}")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be > 0")


def _fine_coords(n: int, pixel_size: float):
    """Supersampled (x, y) coordinates in mm, y pointing up."""
    m = n * SUPERSAMPLE
    step = pixel_size / SUPERSAMPLE
    c = (np.arange(m) - (m - 1) / 2.0) * step
    return np.meshgrid(c, -c)


def _box_down(fine: np.ndarray, n: int) -> np.ndarray:
    return fine.reshape(n, SUPERSAMPLE, n, SUPERSAMPLE).mean(axis=(1, 3))


def shepp_logan(n: int, pixel_size: float) -> np.ndarray:
    x, y = _fine_coords(n, pixel_size)
    half = n * pixel_size / 2.0
    x, y = x / half, y / half
    fine = np.zeros(x.shape)
    for value, a, b, x0, y0, phi in _SHEPP_LOGAN:
        t = np.deg2rad(phi)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        fine[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return _box_down(fine * _SL_SCALE, n)


def disk(n: int, pixel_size: float, radius: float, mu: float, center=(0.0, 0.0)) -> np.ndarray:
    x, y = _fine_coords(n, pixel_size)
    inside = (x - center[0]) ** 2 + (y - center[1]) ** 2 <= radius**2
    return _box_down(inside * float(mu), n)


def edge(n: int, pixel_size: float, low: float = 0.0, high: float = 0.04, angle_deg: float = 0.0, offset: float = 0.0):
    """Two half-planes split by a line through ``offset`` mm, tilted by ``angle_deg`` from vertical."""
    x, y = _fine_coords(n, pixel_size)
    t = np.deg2rad(angle_deg)
    right = x * np.cos(t) + y * np.sin(t) >= offset
    return _box_down(np.where(right, high, low), n)


DEFAULT_BAR_FREQS = (0.3, 0.4, 0.5, 0.6, 0.7)


def _bar_boxes(n, pixel_size, freqs, bars_per_group):
    """Bar groups as (x0, x1, y0, y1, period) and the edge insert as (x0, x1, y0, y1), in mm."""
    fov = n * pixel_size
    radius = 0.46 * fov
    per_row = (len(freqs) + 1) // 2
    group_h = 0.16 * fov
    gap = 0.03 * fov
    slot_w = 1.2 * radius / per_row
    groups = []
    for g, f in enumerate(freqs):
        period = 1.0 / f
        width = bars_per_group * period - period / 2.0
        row, col = divmod(g, per_row)
        x0 = -0.6 * radius + col * slot_w + (slot_w - width) / 2.0
        y1 = 0.55 * radius - row * (group_h + gap)
        groups.append((x0, x0 + width, y1 - group_h, y1, period))
    half = 0.1 * fov
    cy = -0.55 * radius
    return radius, groups, (-half, half, cy - half, cy + half)


def bar_pattern(
    n: int,
    pixel_size: float,
    freqs=DEFAULT_BAR_FREQS,
    contrast: float = 0.02,
    background: float = WATER_60KEV,
    edge_insert: bool = True,
    bars_per_group: int = 5,
) -> np.ndarray:
    """Water disk holding two rows of vertical bar groups and a square edge insert.

    Bars run vertically (the profile varies along x).  The insert, a square of
    value ``background + 2 * contrast`` below the bar groups, offers long
    straight edges for MTF measurements.
    """
    nyquist = 1.0 / (2.0 * pixel_size)
    freqs = [float(f) for f in freqs]
    if len(freqs) < 4:
        raise ValueError("bar pattern needs at least four groups")
    if max(freqs) > nyquist:
        raise ValueError(f"bar frequency {max(freqs)} lp/mm exceeds grid Nyquist {nyquist:.4g} lp/mm")
    if background + 2 * contrast > MAX_MU:
        raise ValueError("phantom values would exceed the attenuation limit")

    x, y = _fine_coords(n, pixel_size)
    radius, groups, insert = _bar_boxes(n, pixel_size, freqs, bars_per_group)
    fine = np.where(x**2 + y**2 <= radius**2, background, 0.0)
    for x0, x1, y0, y1, period in groups:
        in_group = (x >= x0) & (x < x1) & (y > y0) & (y <= y1)
        fine[in_group & (np.mod(x - x0, period) < period / 2.0)] += contrast
    if edge_insert:
        x0, x1, y0, y1 = insert
        fine[(x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)] = background + 2.0 * contrast
    return _box_down(fine, n)


def bar_layout(n: int, pixel_size: float, freqs=DEFAULT_BAR_FREQS, bars_per_group: int = 5):
    """Pixel boxes ``(row0, row1, col0, col1)`` (inclusive) of each bar group and of the edge insert."""
    _, groups, insert = _bar_boxes(n, pixel_size, [float(f) for f in freqs], bars_per_group)
    c = (n - 1) / 2.0

    def box(x0, x1, y0, y1):
        return (
            int(np.ceil(c - y1 / pixel_size)),
            int(np.floor(c - y0 / pixel_size)),
            int(np.ceil(x0 / pixel_size + c)),
            int(np.floor(x1 / pixel_size + c)),
        )

    return [box(*g[:4]) for g in groups], box(*insert)


def generate(spec: PhantomSpec) -> Image:
    p = dict(spec.params)
    if spec.kind == "shepp_logan":
        data = shepp_logan(spec.n, spec.pixel_size)
    elif spec.kind == "disk":
        data = disk(spec.n, spec.pixel_size, p.get("radius", spec.n * spec.pixel_size / 4), p.get("mu", WATER_60KEV),
                    tuple(p.get("center", (0.0, 0.0))))
    elif spec.kind == "edge":
        data = edge(spec.n, spec.pixel_size, p.get("low", 0.0), p.get("high", 0.04), p.get("angle_deg", 0.0),
                    p.get("offset", 0.0))
    else:
        data = bar_pattern(spec.n, spec.pixel_size, tuple(p.get("freqs", DEFAULT_BAR_FREQS)),
                           p.get("contrast", 0.02), p.get("background", WATER_60KEV), p.get("edge_insert", True))
    if data.min() < 0.0 or data.max() > MAX_MU:
        raise ValueError("phantom values leave the [0, 0.1] mm^-1 range")
    return Image(data, spec.pixel_size)
