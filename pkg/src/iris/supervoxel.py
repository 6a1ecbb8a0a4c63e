"""SLIC supervoxels and the per-iteration region-count schedule.

Labels are stored per voxel as consecutive integers 0..region_count-1, every
region 26-connected and nonempty. The implementation is deterministic: seeds
sit on a regular grid and orphaned components get merged by fixed tie rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage

_STRUCT26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class SlicConfig:
    spacing_scale: tuple[float, float, float] = (2.0, 2.0, 2.0)
    compactness: float = 0.3
    iterations: int = 10
    # gaussian presmoothing (voxels) of the clustering input; without it,
    # per-voxel intensity noise swamps the spatial term and regions lose
    # boundary adherence. Size-1 axes are left untouched.
    smoothing: float = 1.5

    def __post_init__(self):
        if self.compactness <= 0:
            raise ValueError("compactness must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")


@dataclass(frozen=True)
class SupervoxelLabeling:
    labels: np.ndarray  # (d, h, w) int32, values 0..region_count-1
    region_count: int

    def region_members(self) -> list[np.ndarray]:
        """Flat voxel indices per region, ordered by label id."""
        flat = self.labels.ravel()
        order = np.argsort(flat, kind="stable")
        bounds = np.searchsorted(flat[order], np.arange(self.region_count + 1))
        return [order[bounds[i] : bounds[i + 1]] for i in range(self.region_count)]


def schedule_region_count(iteration: int) -> int:
    """Scheduled supervoxel size in voxels for a refinement iteration.

    Returns ceil(100 * 0.45^iteration): regions start large and shrink so
    later refinement iterations operate at a finer granularity.
    """
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return int(math.ceil(100 * Fraction(45, 100) ** iteration))


def _seed_grid(dims, spacing_scale, k):
    """Per-axis seed counts whose product is k, with steps as isotropic as possible.

    Raises ValueError when no factorization keeps the step aspect ratio at or
    below 2, since badly elongated seed cells (a prime k on a 2D slab forces a
    single row of seeds) destroy boundary adherence; callers then fall back to
    a near-isotropic grid whose seed count only approximates k.
    """
    scaled = [d * s for d, s in zip(dims, spacing_scale)]
    active = [i for i, d in enumerate(dims) if d > 1]
    if not active:
        return (1, 1, 1)
    best = None
    for nz in _divisors(k) if 0 in active else (1,):
        for ny in _divisors(k // nz) if 1 in active else (1,):
            if k % (nz * ny):
                continue
            nx = k // (nz * ny)
            if 2 not in active and nx != 1:
                continue
            counts = (nz, ny, nx)
            if any(c > dims[i] for i, c in enumerate(counts)):
                continue
            steps = [scaled[i] / counts[i] for i in active]
            spread = max(steps) / min(steps)
            key = (spread, counts)
            if best is None or key < best:
                best = key
    if best is None or best[0] > 2.0:
        raise ValueError(f"cannot place {k} near-isotropic seeds on grid {dims}")
    return best[1]


def _divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


def slic(intensity: np.ndarray, region_count: int, cfg: SlicConfig) -> SupervoxelLabeling:
    """SLIC k-means over joint (scaled position, intensity) space.

    After `cfg.iterations` assignment/update rounds, disconnected fragments are
    merged into the largest 26-adjacent region (ties to the lowest label id)
    and labels are renumbered consecutively in raster order of first
    occurrence. The resulting region_count may differ from the request when
    clusters empty out or merge.
    """
    dims = intensity.shape
    nvox = int(np.prod(dims))
    if not (1 <= region_count <= nvox):
        raise ValueError(f"region_count {region_count} out of range 1..{nvox}")
    if region_count == nvox:
        labels = np.arange(nvox, dtype=np.int32).reshape(dims)
        return SupervoxelLabeling(labels, nvox)
    if region_count == 1:
        return SupervoxelLabeling(np.zeros(dims, dtype=np.int32), 1)

    scale = np.asarray(cfg.spacing_scale, dtype=np.float64)
    try:
        counts = _seed_grid(dims, cfg.spacing_scale, region_count)
    except ValueError:
        # non-factorable request: use the nearest regular grid not exceeding k
        counts = _approx_grid(dims, cfg.spacing_scale, region_count)
    centers_pos = _grid_centers(dims, counts)  # (k, 3) voxel coords
    img = np.ascontiguousarray(intensity, dtype=np.float64)
    if cfg.smoothing > 0:
        sigma = [cfg.smoothing if d > 1 else 0.0 for d in dims]
        img = ndimage.gaussian_filter(img, sigma=sigma)
    centers_int = img[tuple(np.round(centers_pos).astype(int).T)]
    centers_pos = centers_pos * scale  # work in scaled coordinates

    steps_scaled = [dims[i] * scale[i] / counts[i] for i in range(3) if dims[i] > 1]
    interval = float(np.prod(steps_scaled)) ** (1.0 / len(steps_scaled))
    ratio = cfg.compactness / interval

    zz, yy, xx = np.meshgrid(
        np.arange(dims[0]), np.arange(dims[1]), np.arange(dims[2]), indexing="ij"
    )
    coords = np.stack([zz, yy, xx], axis=-1).reshape(-1, 3) * scale
    flat_img = img.ravel()
    k = centers_pos.shape[0]

    assign = np.zeros(nvox, dtype=np.int32)
    for _ in range(cfg.iterations):
        best = np.full(nvox, np.inf)
        assign.fill(-1)
        for c in range(k):
            sel = _window(coords, centers_pos[c], 2.0 * interval)
            d_int = flat_img[sel] - centers_int[c]
            d_sp = coords[sel] - centers_pos[c]
            dist = d_int**2 + ratio**2 * (d_sp**2).sum(axis=1)
            better = dist < best[sel]
            idx = sel[better]
            best[idx] = dist[better]
            assign[idx] = c
        missing = np.flatnonzero(assign < 0)
        if missing.size:
            d_int = flat_img[missing, None] - centers_int[None, :]
            d_sp = coords[missing, None, :] - centers_pos[None, :, :]
            dist = d_int**2 + ratio**2 * (d_sp**2).sum(axis=2)
            assign[missing] = np.argmin(dist, axis=1)
        for c in range(k):
            members = assign == c
            if members.any():
                centers_pos[c] = coords[members].mean(axis=0)
                centers_int[c] = flat_img[members].mean()

    labels = _enforce_connectivity(assign.reshape(dims))
    return SupervoxelLabeling(labels, int(labels.max()) + 1)


def _approx_grid(dims, spacing_scale, k):
    scaled = [d * s for d, s in zip(dims, spacing_scale)]
    active = [i for i, d in enumerate(dims) if d > 1]
    vol = float(np.prod([scaled[i] for i in active]))
    step = (vol / k) ** (1.0 / len(active))
    counts = [1, 1, 1]
    for i in active:
        counts[i] = int(min(dims[i], max(1, round(scaled[i] / step))))
    return tuple(counts)


def _grid_centers(dims, counts):
    axes = [
        (np.arange(counts[i]) + 0.5) * dims[i] / counts[i] - 0.5 for i in range(3)
    ]
    zz, yy, xx = np.meshgrid(*axes, indexing="ij")
    return np.stack([zz.ravel(), yy.ravel(), xx.ravel()], axis=1)


def _window(coords, center, radius):
    lo = center - radius
    hi = center + radius
    sel = np.flatnonzero(
        (coords[:, 0] >= lo[0]) & (coords[:, 0] <= hi[0])
        & (coords[:, 1] >= lo[1]) & (coords[:, 1] <= hi[1])
        & (coords[:, 2] >= lo[2]) & (coords[:, 2] <= hi[2])
    )
    return sel


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Merge non-largest connected fragments of each label into neighbors.

    The largest fragment of every label keeps it; every other fragment joins
    the largest 26-adjacent already-labeled region, ties to the lowest label.
    Output labels are renumbered consecutively by raster order of first
    occurrence.
    """
    dims = labels.shape
    # globally unique connected-component ids, one ndimage pass per label
    comp = np.zeros(dims, dtype=np.int64)
    comp_label = []  # slic label per component
    main_of_label = {}
    offset = 0
    for lab in np.unique(labels):
        c, n = ndimage.label(labels == lab, structure=_STRUCT26)
        sizes = ndimage.sum_labels(np.ones(dims), c, index=np.arange(1, n + 1))
        main_of_label[int(lab)] = offset + int(np.argmax(sizes))  # first max wins ties
        comp[c > 0] = c[c > 0] + offset
        comp_label.extend([int(lab)] * n)
        offset += n
    comp -= 1  # component ids 0..offset-1
    comp_sizes = np.bincount(comp.ravel(), minlength=offset)

    # component adjacency via the 13 positive 26-neighborhood offsets
    adjacency: dict[int, set[int]] = {i: set() for i in range(offset)}
    for dz in (0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if (dz, dy, dx) <= (0, 0, 0):
                    continue
                off = (dz, dy, dx)
                a = comp[tuple(slice(max(0, -o), dims[i] - max(0, o)) for i, o in enumerate(off))]
                b = comp[tuple(slice(max(0, o), dims[i] - max(0, -o)) for i, o in enumerate(off))]
                diff = a != b
                pairs = np.unique(
                    np.stack([a[diff], b[diff]], axis=1), axis=0
                ) if diff.any() else []
                for u, v in pairs:
                    adjacency[int(u)].add(int(v))
                    adjacency[int(v)].add(int(u))

    # main components keep a (renumbered) label; orphans start unassigned
    assigned = np.full(offset, -1, dtype=np.int64)
    region_sizes: dict[int, int] = {}
    for new_label, (_, main_comp) in enumerate(sorted(main_of_label.items())):
        assigned[main_comp] = new_label
        region_sizes[new_label] = int(comp_sizes[main_comp])

    pending = [i for i in range(offset) if assigned[i] < 0]
    next_label = len(main_of_label)
    while pending:
        still = []
        progressed = False
        for ci in pending:
            neigh_labels = sorted({int(assigned[j]) for j in adjacency[ci] if assigned[j] >= 0})
            if not neigh_labels:
                still.append(ci)
                continue
            best = max(neigh_labels, key=lambda lab: (region_sizes[lab], -lab))
            assigned[ci] = best
            region_sizes[best] += int(comp_sizes[ci])
            progressed = True
        if not progressed and still:
            # isolated orphan cluster: promote the first to a fresh label
            assigned[still[0]] = next_label
            region_sizes[next_label] = int(comp_sizes[still[0]])
            next_label += 1
            still = still[1:]
        pending = still

    return _relabel_raster(assigned[comp])


def _relabel_raster(labels: np.ndarray) -> np.ndarray:
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    ranks = np.argsort(np.argsort(first))  # raster rank of each unique label
    remap = np.empty(int(flat.max()) + 1, dtype=np.int32)
    remap[uniq] = ranks.astype(np.int32)
    return remap[flat].reshape(labels.shape)


def region_of(labeling: SupervoxelLabeling, voxel: int) -> set[int]:
    """All flat voxel indices sharing the clicked voxel's label."""
    flat = labeling.labels.ravel()
    if not (0 <= voxel < flat.size):
        raise IndexError("voxel out of range")
    return set(np.flatnonzero(flat == flat[voxel]).tolist())
