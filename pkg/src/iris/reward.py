"""Per-voxel rewards: global (cross-entropy drop), boundary-weighted, totals.

The global reward is the decrease in per-voxel cross entropy between two
consecutive probability maps. The boundary reward weights correctness flips
by proximity to the ground-truth boundary. The total is r_g + lambda * r_b
and episode returns follow the backward discounted recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_CLAMP = 1e-6


@dataclass(frozen=True)
class RewardConfig:
    lambda_boundary: float = 0.5
    gamma: float = 0.95

    def __post_init__(self):
        if self.lambda_boundary < 0:
            raise ValueError("lambda_boundary must be >= 0")
        if not (0 < self.gamma <= 1):
            raise ValueError("gamma must be in (0, 1]")


@dataclass(frozen=True)
class BoundaryWeightField:
    g: np.ndarray  # distance to ground-truth boundary
    t: np.ndarray  # negative min-max normalized weight in [0, 1]
    boundary_present: bool


def boundary_mask(gt: np.ndarray) -> np.ndarray:
    """Foreground voxels with at least one in-grid background 6-neighbor."""
    fg = gt.astype(bool)
    has_bg_neighbor = np.zeros_like(fg)
    for axis in range(3):
        for shift in (-1, 1):
            rolled = np.roll(~fg, shift, axis=axis)
            # mask out the wrap-around plane: out-of-grid is not a neighbor here
            sl = [slice(None)] * 3
            sl[axis] = 0 if shift == 1 else -1
            rolled[tuple(sl)] = False
            has_bg_neighbor |= rolled
    return fg & has_bg_neighbor


def boundary_weights(gt: np.ndarray, spacing) -> BoundaryWeightField:
    """Distance-to-boundary field and its negative min-max normalization."""
    boundary = boundary_mask(gt)
    if not boundary.any():
        zeros = np.zeros(gt.shape, dtype=np.float64)
        return BoundaryWeightField(zeros, zeros.copy(), False)
    g = ndimage.distance_transform_edt(~boundary, sampling=spacing)
    lo, hi = float(g.min()), float(g.max())
    if hi == lo:
        return BoundaryWeightField(g, np.zeros_like(g), False)
    t = 1.0 - (g - lo) / (hi - lo)
    return BoundaryWeightField(g, t, True)


def cross_entropy(p: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-voxel binary cross entropy with probabilities clamped away from {0,1}."""
    p = np.clip(p, _CLAMP, 1.0 - _CLAMP)
    y = gt.astype(np.float64)
    return -y * np.log(p) - (1.0 - y) * np.log(1.0 - p)


def global_reward(p_prev: np.ndarray, p_cur: np.ndarray, gt: np.ndarray) -> np.ndarray:
    return cross_entropy(p_prev, gt) - cross_entropy(p_cur, gt)


def correctness_weight(p: np.ndarray, gt: np.ndarray, w: BoundaryWeightField) -> np.ndarray:
    """+t where the thresholded prediction matches ground truth, -t elsewhere."""
    correct = (p > 0.5) == (gt.astype(bool))
    return np.where(correct, w.t, -w.t)


def boundary_reward(
    p_prev: np.ndarray, p_cur: np.ndarray, gt: np.ndarray, w: BoundaryWeightField
) -> np.ndarray:
    if not w.boundary_present:
        return np.zeros(gt.shape, dtype=np.float64)
    return correctness_weight(p_cur, gt, w) - correctness_weight(p_prev, gt, w)


def total_reward(r_global: np.ndarray, r_boundary: np.ndarray, cfg: RewardConfig) -> np.ndarray:
    return r_global + cfg.lambda_boundary * r_boundary


def absolute_reward(
    p: np.ndarray, gt: np.ndarray, w: BoundaryWeightField, cfg: RewardConfig
) -> np.ndarray:
    """Ablation-only absolute form: -chi + lambda * psi for the current map."""
    r = -cross_entropy(p, gt)
    if w.boundary_present and cfg.lambda_boundary > 0:
        r = r + cfg.lambda_boundary * correctness_weight(p, gt, w)
    return r


def total_and_return(step_rewards, cfg: RewardConfig) -> np.ndarray:
    """Discounted per-voxel return over an episode, terminal R = 0.

    `step_rewards` is the per-iteration sequence of total reward fields in
    forward time order.
    """
    if len(step_rewards) == 0:
        raise ValueError("episode must contain at least one step")
    ret = np.zeros_like(step_rewards[0])
    for r in reversed(step_rewards):
        ret = r + cfg.gamma * ret
    return ret
