"""Reproducible Gaussian draws for parameter initialisation.

Uniforms come from a Philox-4x64 counter-based generator keyed directly by the
seed; they are turned into normals with the Box-Muller transform so the
sequence does not depend on numpy's internal normal sampler.
"""

from __future__ import annotations

import numpy as np


def uniforms(seed: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(bitgen).random(count)


def gaussians(seed: int, count: int, std: float = 1.0) -> np.ndarray:
    pairs = (count + 1) // 2
    u = uniforms(seed, 2 * pairs).reshape(pairs, 2)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).ravel()
    return std * z[:count]


def normal_noise(seed: int, shape, std: float) -> np.ndarray:
    """Additive noise for sinogram synthesis; a distinct stream from the init draws."""
    n = int(np.prod(shape))
    return gaussians(seed ^ 0x5EED5EED5EED5EED, n, std).reshape(shape)
