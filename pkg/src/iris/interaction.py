"""Hint sets, robot-user click simulation, and interaction map construction.

Hints are flat voxel indices split into object and background sets; the sets
accumulate over an interactive sequence and never shrink. Clicks expand to
the full supervoxel containing the clicked voxel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import distfield
from .supervoxel import SupervoxelLabeling
from .volume import Volume

OBJECT = "object"
BACKGROUND = "background"


@dataclass(frozen=True)
class Click:
    pos: tuple[int, int, int]  # (z, y, x)
    polarity: str

    def __post_init__(self):
        if self.polarity not in (OBJECT, BACKGROUND):
            raise ValueError(f"bad polarity {self.polarity!r}")

    def to_wire(self) -> dict:
        return {"pos": list(self.pos), "polarity": self.polarity}

    @classmethod
    def from_wire(cls, obj: dict) -> "Click":
        pos = tuple(int(c) for c in obj["pos"])
        return cls(pos, str(obj["polarity"]))


@dataclass
class HintSet:
    object_hints: set[int] = field(default_factory=set)
    background_hints: set[int] = field(default_factory=set)

    def copy(self) -> "HintSet":
        return HintSet(set(self.object_hints), set(self.background_hints))


@dataclass(frozen=True)
class RobotConfig:
    clicks_per_iteration: int = 6
    noise_range: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.clicks_per_iteration < 0 or self.noise_range < 0:
            raise ValueError("clicks_per_iteration and noise_range must be >= 0")


def simulate_clicks(
    pred: np.ndarray,
    gt: np.ndarray,
    labeling: SupervoxelLabeling,
    cfg: RobotConfig,
    rng: np.random.Generator,
) -> list[Click]:
    """Click the centers of the most mis-segmented supervoxels.

    The N_c regions with the largest error counts (ties to the lower label)
    each get one click at the member voxel nearest the region centroid, with
    polarity set by the dominant error type and an optional integer
    perturbation clamped to the grid.
    """
    dims = gt.shape
    err = (pred.astype(bool) != gt.astype(bool)).ravel()
    labels = labeling.labels.ravel()
    counts = np.bincount(labels[err], minlength=labeling.region_count)
    order = np.lexsort((np.arange(labeling.region_count), -counts))
    clicks = []
    members_by_label = None
    for lab in order[: cfg.clicks_per_iteration]:
        if counts[lab] == 0:
            break
        if members_by_label is None:
            members_by_label = labeling.region_members()
        members = members_by_label[lab]
        coords = np.stack(np.unravel_index(members, dims), axis=1)
        centroid = coords.mean(axis=0)
        nearest = int(np.argmin(((coords - centroid) ** 2).sum(axis=1)))
        pos = coords[nearest]
        region_err = err[members]
        gt_flat = gt.ravel().astype(bool)[members]
        fn = int((region_err & gt_flat).sum())  # gt fg predicted bg
        fp = int((region_err & ~gt_flat).sum())
        polarity = OBJECT if fn >= fp else BACKGROUND
        if cfg.noise_range > 0:
            pos = pos + rng.integers(-cfg.noise_range, cfg.noise_range + 1, size=3)
            pos = np.clip(pos, 0, np.array(dims) - 1)
        clicks.append(Click(tuple(int(c) for c in pos), polarity))
    return clicks


def random_clicks(
    dims, count: int, rng: np.random.Generator
) -> list[Click]:
    """Uniformly random clicks with random polarity (interaction-quality ablation)."""
    clicks = []
    for _ in range(count):
        pos = tuple(int(rng.integers(0, d)) for d in dims)
        polarity = OBJECT if rng.random() < 0.5 else BACKGROUND
        clicks.append(Click(pos, polarity))
    return clicks


def expand_clicks(
    clicks: list[Click],
    labeling: SupervoxelLabeling,
    hints: HintSet,
    expansion: str = "supervoxel",
) -> HintSet:
    """Grow the hint sets by the clicked supervoxels (or bare voxels).

    A voxel already hinted with the opposite polarity keeps its original
    assignment; hint sets only ever grow.
    """
    out = hints.copy()
    dims = labeling.labels.shape
    flat_labels = labeling.labels.ravel()
    for click in clicks:
        z, y, x = click.pos
        if not (0 <= z < dims[0] and 0 <= y < dims[1] and 0 <= x < dims[2]):
            raise IndexError(f"click position {click.pos} outside grid {dims}")
        voxel = int(np.ravel_multi_index(click.pos, dims))
        if expansion == "point":
            new = {voxel}
        else:
            new = set(np.flatnonzero(flat_labels == flat_labels[voxel]).tolist())
        if click.polarity == OBJECT:
            out.object_hints |= new - out.background_hints
        else:
            out.background_hints |= new - out.object_hints
    return out


def build_maps(
    v: Volume, hints: HintSet, kind: distfield.DistanceKind
) -> tuple[np.ndarray, np.ndarray]:
    """Interaction map pair (h_plus, h_minus), each min-max scaled to [0, 1].

    Empty hint sets yield all-zero maps; a field with zero maximum stays zero.
    """
    maps = []
    for seeds in (hints.object_hints, hints.background_hints):
        fieldvals = distfield.transform(kind, v.data, v.spacing, seeds)
        peak = float(fieldvals.max())
        if peak > 0:
            fieldvals = fieldvals / peak
        maps.append(fieldvals)
    return maps[0], maps[1]
