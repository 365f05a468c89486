"""Deterministic synthetic grayscale covers for tests and self-checks.

Covers mix a smooth shaded background with textured patches and a few hard
edges, so both the smooth-region mask and the texture terms have something
to act on.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def textured_cover(size: int = 256, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w] / size
    phase = rng.uniform(0, 2 * np.pi, 2)
    base = 110 + 50 * np.sin(2.1 * xx + phase[0]) * np.cos(1.7 * yy + phase[1])

    texture = ndimage.gaussian_filter(rng.normal(0, 1, (h, w)), 0.8)
    texture /= texture.std()
    # blob-shaped regions of busy texture, amplitude varying between blobs
    regions = ndimage.gaussian_filter(rng.normal(0, 1, (h, w)), size / 12)
    regions = (regions - regions.mean()) / regions.std()
    amplitude = np.clip(regions, 0, None) * rng.uniform(12, 28)
    img = base + amplitude * texture

    # a couple of step edges
    for _ in range(2):
        a, b = rng.normal(size=2)
        c = rng.uniform(-0.3, 0.3)
        img += rng.uniform(15, 40) * ((a * (xx - 0.5) + b * (yy - 0.5) + c) > 0)
    img += rng.normal(0, 0.6, (h, w))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def quadrant_cover(size: int = 32, seed: int = 0, amplitude: float = 60.0) -> np.ndarray:
    """Flat mid-gray image whose top-left quadrant carries high-contrast noise."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 128.0)
    half = size // 2
    img[:half, :half] += rng.uniform(-amplitude, amplitude, (half, half))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
