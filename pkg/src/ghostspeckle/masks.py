"""Test objects: squares, disks and a llama silhouette."""

from __future__ import annotations

import numpy as np

from .correlation import Mask
from .specklefield import GridSpec

__all__ = ["llama_silhouette", "llama_mask", "square_mask", "disk_mask", "embed"]


def _ellipse(y, x, cy, cx, ry, rx):
    return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0


def _box(y, x, y0, y1, x0, x1):
    return (y >= y0) & (y < y1) & (x >= x0) & (x < x1)


def llama_silhouette(size: int = 40) -> np.ndarray:
    """Side view of a llama facing right, drawn on a ``size x size`` canvas.

    Built from ellipses and bars in unit coordinates so any size works;
    at 40 px it covers about 450 pixels.
    """
    y, x = (np.indices((size, size)) + 0.5) / size
    body = _ellipse(y, x, 0.56, 0.45, 0.13, 0.27)
    neck = _box(y, x, 0.16, 0.58, 0.64, 0.76)
    head = _ellipse(y, x, 0.17, 0.76, 0.075, 0.14)
    ears = _box(y, x, 0.04, 0.12, 0.66, 0.69) | _box(y, x, 0.04, 0.12, 0.71, 0.74)
    tail = _ellipse(y, x, 0.47, 0.17, 0.07, 0.045)
    legs = np.zeros_like(body)
    for x0 in (0.22, 0.33, 0.55, 0.64):
        legs |= _box(y, x, 0.62, 0.95, x0, x0 + 0.075)
    return body | neck | head | ears | tail | legs


def embed(pattern: np.ndarray, grid: GridSpec, center=None) -> np.ndarray:
    """Place a boolean pattern in an otherwise empty grid-sized image."""
    pattern = np.asarray(pattern, dtype=bool)
    h, w = pattern.shape
    cx, cy = grid.center if center is None else center
    y0, x0 = int(cy) - h // 2, int(cx) - w // 2
    if y0 < 0 or x0 < 0 or y0 + h > grid.height or x0 + w > grid.width:
        raise ValueError("pattern does not fit in the grid at that position")
    out = np.zeros(grid.shape, dtype=bool)
    out[y0:y0 + h, x0:x0 + w] = pattern
    return out


def llama_mask(grid: GridSpec, size: int = 40, center=None) -> Mask:
    return Mask(grid, embed(llama_silhouette(size), grid, center))


def square_mask(grid: GridSpec, side: int, center=None) -> Mask:
    return Mask(grid, embed(np.ones((side, side), dtype=bool), grid, center))


def disk_mask(grid: GridSpec, radius: float, center=None) -> Mask:
    cx, cy = grid.center if center is None else center
    y, x = np.indices(grid.shape)
    return Mask(grid, (x - cx) ** 2 + (y - cy) ** 2 <= radius**2)
