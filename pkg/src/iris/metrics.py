"""Segmentation quality metrics: DSC, ASSD and HD95.

Surfaces are foreground voxels with at least one background 6-neighbor, where
the grid border counts as background. ASSD is reported in voxel units and
HD95 in millimetres (spacing-scaled), matching the usual table headers.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class UndefinedSurfaceDistance(ValueError):
    """Raised when a mask has no surface (empty foreground)."""


def dsc(a: np.ndarray, b: np.ndarray) -> float:
    """Dice similarity coefficient; both-empty pairs score 1.0."""
    if a.shape != b.shape:
        raise ValueError("mask dims mismatch")
    a = a.astype(bool)
    b = b.astype(bool)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """(n, 3) coordinates of foreground voxels with a background 6-neighbor."""
    fg = mask.astype(bool)
    padded = np.pad(fg, 1, constant_values=False)
    interior = np.ones_like(fg)
    for axis in range(3):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    surface = fg & ~interior
    return np.argwhere(surface)


def surface_distances(a: np.ndarray, b: np.ndarray, spacing) -> tuple[float, float]:
    """(ASSD in voxel units, HD95 in mm) between two nonempty masks."""
    if a.shape != b.shape:
        raise ValueError("mask dims mismatch")
    sa = surface_voxels(a)
    sb = surface_voxels(b)
    if sa.shape[0] == 0 or sb.shape[0] == 0:
        raise UndefinedSurfaceDistance("undefined surface distance for empty mask")

    d_ab_vox, d_ba_vox = _directed(sa, sb, (1.0, 1.0, 1.0))
    assd = float(np.concatenate([d_ab_vox, d_ba_vox]).mean())

    d_ab_mm, d_ba_mm = _directed(sa, sb, spacing)
    pooled = np.concatenate([d_ab_mm, d_ba_mm])
    hd95 = float(np.percentile(pooled, 95, method="linear"))
    return assd, hd95


def _directed(sa, sb, spacing):
    scale = np.asarray(spacing, dtype=np.float64)
    ta = cKDTree(sa * scale)
    tb = cKDTree(sb * scale)
    d_ab, _ = tb.query(sa * scale)
    d_ba, _ = ta.query(sb * scale)
    return d_ab, d_ba
