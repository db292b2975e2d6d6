"""Acquisition geometry and the two array containers used throughout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Geometry:
    """2-D parallel-beam acquisition.

    Detector bin ``d`` sits at ``(d - (n_det - 1) / 2 + det_center_offset) * det_spacing``
    mm; ``det_center_offset`` is expressed in bins.
    """

    angles: tuple
    n_det: int
    det_spacing: float
    det_center_offset: float = 0.0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(np.asarray(self.angles, dtype=float)))
        object.__setattr__(self, "angles", angles)
        if len(angles) < 1:
            raise ValueError("geometry needs at least one view")
        if self.n_det < 2:
            raise ValueError(f"n_det must be >= 2, got {self.n_det}")
        if not self.det_spacing > 0:
            raise ValueError(f"det_spacing must be > 0, got {self.det_spacing}")
        if not np.all(np.isfinite(angles)):
            raise ValueError("angles must be finite")

    @classmethod
    def parallel(cls, n_views, n_det, det_spacing, arc=np.pi, det_center_offset=0.0):
        """Equally spaced views over ``[0, arc)``."""
        angles = np.arange(n_views) * (arc / n_views)
        return cls(tuple(angles), int(n_det), float(det_spacing), float(det_center_offset))

    @property
    def n_views(self) -> int:
        return len(self.angles)

    @property
    def angle_array(self) -> np.ndarray:
        return np.asarray(self.angles, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_views, self.n_det)

    def det_positions(self) -> np.ndarray:
        d = np.arange(self.n_det, dtype=np.float64)
        return (d - (self.n_det - 1) / 2.0 + self.det_center_offset) * self.det_spacing

    def lower(self) -> "Geometry":
        """Counterpart detector with half the bins at twice the pitch.

        The center offset is shifted so that coarse bin ``d`` coincides with fine
        bin ``2d``; stride-2 sampling then needs no resampling phase correction.
        """
        if self.n_det % 2:
            raise ValueError(f"cannot halve an odd detector ({self.n_det} bins)")
        return Geometry(
            self.angles,
            self.n_det // 2,
            self.det_spacing * 2.0,
            (self.det_center_offset - 0.5) / 2.0,
        )

    def higher(self) -> "Geometry":
        """Inverse of :meth:`lower`."""
        return Geometry(
            self.angles,
            self.n_det * 2,
            self.det_spacing / 2.0,
            self.det_center_offset * 2.0 + 0.5,
        )


def _as_f64(data) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    return arr


@dataclass
class Image:
    """Square pixel grid of attenuation values (mm^-1), row 0 at the top."""

    data: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        self.data = _as_f64(self.data)
        if self.data.shape[0] != self.data.shape[1]:
            raise ValueError(f"image must be square, got {self.data.shape}")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be > 0")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def grid(self) -> "Grid":
        return Grid(self.n, self.pixel_size)


@dataclass
class Sinogram:
    """Views x detector bins of line integrals."""

    data: np.ndarray
    det_spacing: float = 1.0

    def __post_init__(self):
        self.data = _as_f64(self.data)

    @property
    def n_views(self) -> int:
        return self.data.shape[0]

    @property
    def n_det(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Grid:
    """Reconstruction grid: ``n`` x ``n`` pixels of side ``pixel_size`` mm."""

    n: int
    pixel_size: float = field(default=1.0)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2, got {self.n}")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be > 0")

    def doubled(self) -> "Grid":
        return Grid(self.n * 2, self.pixel_size / 2.0)
