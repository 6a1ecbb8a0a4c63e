"""3D scalar grids: IVOL file format, normalization, synthetic data, augmentation.

Grids are stored depth-major (z, y, x) to match the on-disk row-major layout.
Volumes carry float64 intensities in memory and are serialized as float32;
masks are uint8 with values {0, 1}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class VolumeFormatError(ValueError):
    """Raised for malformed IVOL containers."""


_MAGIC = "IVOL1"
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


@dataclass(frozen=True)
class Volume:
    spacing: tuple[float, float, float]
    data: np.ndarray  # (depth, height, width) float64

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume must be a nonempty 3D grid, got shape {data.shape}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Mask:
    spacing: tuple[float, float, float]
    labels: np.ndarray  # (depth, height, width) uint8 in {0, 1}

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise ValueError(f"mask must be a nonempty 3D grid, got shape {labels.shape}")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("mask labels must be binary")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the random-ellipsoid synthetic generator."""

    seed: int
    dims: tuple[int, int, int] = (1, 64, 64)
    blob_count: tuple[int, int] = (1, 4)
    contrast: float = 1.0
    noise_sd: float = 0.15

    def __post_init__(self):
        if self.contrast <= 0:
            raise ValueError("contrast must be > 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def _read_header(handle) -> dict:
    line = bytearray()
    while True:
        ch = handle.read(1)
        if not ch:
            raise VolumeFormatError("truncated header")
        if ch == b"\n":
            break
        line += ch
        if len(line) > 4096:
            raise VolumeFormatError("header line too long")
    text = line.decode("utf-8", errors="replace")
    if not text.startswith(_MAGIC + " "):
        raise VolumeFormatError("missing IVOL1 magic")
    try:
        header = json.loads(text[len(_MAGIC) + 1 :])
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"bad header json: {exc}") from exc
    for key in ("dims", "spacing", "dtype"):
        if key not in header:
            raise VolumeFormatError(f"header missing {key!r}")
    dims = header["dims"]
    spacing = header["spacing"]
    if len(dims) != 3 or any(int(d) <= 0 for d in dims):
        raise VolumeFormatError(f"non-positive dims {dims}")
    if len(spacing) != 3 or any(float(s) <= 0 for s in spacing):
        raise VolumeFormatError(f"non-positive spacing {spacing}")
    if header["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unknown dtype {header['dtype']!r}")
    return header


def _load_payload(handle, header) -> np.ndarray:
    dims = tuple(int(d) for d in header["dims"])
    dtype = _DTYPES[header["dtype"]]
    count = dims[0] * dims[1] * dims[2]
    raw = handle.read()
    if len(raw) != count * dtype.itemsize:
        raise VolumeFormatError(
            f"payload length mismatch: expected {count * dtype.itemsize} bytes, got {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(dims)


def load_volume(path) -> Volume:
    """Load an IVOL container holding f32 intensities."""
    with open(path, "rb") as fh:
        header = _read_header(fh)
        arr = _load_payload(fh, header)
    return Volume(tuple(float(s) for s in header["spacing"]), arr.astype(np.float64))


def load_mask(path) -> Mask:
    """Load an IVOL container holding a u8 binary mask."""
    with open(path, "rb") as fh:
        header = _read_header(fh)
        arr = _load_payload(fh, header)
    return Mask(tuple(float(s) for s in header["spacing"]), arr.astype(np.uint8))


def _write(path, dims, spacing, dtype_name, payload: np.ndarray):
    header = {"dims": list(dims), "spacing": list(spacing), "dtype": dtype_name}
    with open(path, "wb") as fh:
        fh.write((_MAGIC + " " + json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(payload, dtype=_DTYPES[dtype_name]).tobytes())


def save_volume(v: Volume, path):
    _write(path, v.dims, v.spacing, "f32", v.data)


def save_mask(m: Mask, path):
    _write(path, m.dims, m.spacing, "u8", m.labels)


def volume_to_bytes(v: Volume) -> bytes:
    header = {"dims": list(v.dims), "spacing": list(v.spacing), "dtype": "f32"}
    return (
        (_MAGIC + " " + json.dumps(header, sort_keys=True) + "\n").encode()
        + np.ascontiguousarray(v.data, dtype=_DTYPES["f32"]).tobytes()
    )


def mask_to_bytes(m: Mask) -> bytes:
    header = {"dims": list(m.dims), "spacing": list(m.spacing), "dtype": "u8"}
    return (
        (_MAGIC + " " + json.dumps(header, sort_keys=True) + "\n").encode()
        + np.ascontiguousarray(m.labels, dtype=_DTYPES["u8"]).tobytes()
    )


def volume_from_bytes(blob: bytes) -> Volume:
    import io

    with io.BytesIO(blob) as fh:
        header = _read_header(fh)
        arr = _load_payload(fh, header)
    return Volume(tuple(float(s) for s in header["spacing"]), arr.astype(np.float64))


def mask_from_bytes(blob: bytes) -> Mask:
    import io

    with io.BytesIO(blob) as fh:
        header = _read_header(fh)
        arr = _load_payload(fh, header)
    if header["dtype"] != "u8":
        raise VolumeFormatError("mask payload must be u8")
    return Mask(tuple(float(s) for s in header["spacing"]), arr.astype(np.uint8))


def normalize(v: Volume) -> Volume:
    """Zero-mean unit-stdev normalization; constant input maps to all zeros."""
    mean = float(v.data.mean())
    std = float(v.data.std())  # population stdev
    if std == 0.0:
        return Volume(v.spacing, np.zeros_like(v.data))
    return Volume(v.spacing, (v.data - mean) / std)


def generate_synthetic(spec: SynthSpec) -> tuple[Volume, Mask]:
    """Random ellipsoid-union mask plus Gaussian-noised contrast image.

    Regenerates internally until the foreground fraction lands in [0.01, 0.60].
    """
    rng = np.random.default_rng(spec.seed)
    d, h, w = spec.dims
    zz, yy, xx = np.meshgrid(
        np.arange(d, dtype=np.float64),
        np.arange(h, dtype=np.float64),
        np.arange(w, dtype=np.float64),
        indexing="ij",
    )
    for _ in range(1000):
        n_blobs = int(rng.integers(spec.blob_count[0], spec.blob_count[1] + 1))
        mask = np.zeros(spec.dims, dtype=bool)
        for _ in range(n_blobs):
            center = rng.uniform([0, 0, 0], [d, h, w])
            semi = np.maximum(1.0, rng.uniform(0.1, 0.35) * np.array([d, h, w]))
            # degenerate axes (dim == 1) get a semi-axis covering the slab
            semi = np.where(np.array(spec.dims) == 1, 1.0, semi)
            quad = (
                ((zz - center[0]) / semi[0]) ** 2
                + ((yy - center[1]) / semi[1]) ** 2
                + ((xx - center[2]) / semi[2]) ** 2
            )
            mask |= quad <= 1.0
        frac = mask.mean()
        if 0.01 <= frac <= 0.60:
            break
    else:
        raise RuntimeError("could not generate a mask within the foreground band")
    voxels = spec.contrast * mask.astype(np.float64)
    if spec.noise_sd > 0:
        voxels = voxels + rng.normal(0.0, spec.noise_sd, size=spec.dims)
    return Volume((1.0, 1.0, 1.0), voxels), Mask((1.0, 1.0, 1.0), mask.astype(np.uint8))


def _rotation_matrix(angles: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Rotation about each grid axis; axes with any orthogonal dim == 1 are skipped."""
    az, ay, ax = angles
    d, h, w = dims
    mats = []
    if h > 1 and w > 1:  # rotation about z mixes y/x
        c, s = math.cos(az), math.sin(az)
        mats.append(np.array([[1, 0, 0], [0, c, -s], [0, s, c]]))
    if d > 1 and w > 1:
        c, s = math.cos(ay), math.sin(ay)
        mats.append(np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]]))
    if d > 1 and h > 1:
        c, s = math.cos(ax), math.sin(ax)
        mats.append(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]))
    rot = np.eye(3)
    for m in mats:
        rot = m @ rot
    return rot


def augment(v: Volume, m: Mask, seed: int) -> tuple[Volume, Mask]:
    """Random per-axis flips plus a small random rotation.

    Intensities are resampled trilinearly with out-of-grid samples filled by
    the volume minimum; the mask uses nearest neighbor and stays binary.
    """
    rng = np.random.default_rng(seed)
    flips = rng.random(3) < 0.5
    angles = rng.uniform(-math.pi / 8, math.pi / 8, size=3)
    return apply_augmentation(v, m, flips, angles)


def apply_augmentation(v: Volume, m: Mask, flips, angles) -> tuple[Volume, Mask]:
    """Deterministic core of `augment` with explicit flips and rotation angles."""
    if v.dims != m.dims:
        raise ValueError("volume/mask dims mismatch")
    vox = v.data
    lab = m.labels
    for axis in range(3):
        if flips[axis]:
            vox = np.flip(vox, axis=axis)
            lab = np.flip(lab, axis=axis)

    rot = _rotation_matrix(angles, v.dims)
    center = (np.array(v.dims, dtype=np.float64) - 1.0) / 2.0
    offset = center - rot @ center
    vox = ndimage.affine_transform(
        vox, rot, offset=offset, order=1, mode="constant", cval=float(vox.min())
    )
    lab = ndimage.affine_transform(
        lab, rot, offset=offset, order=0, mode="constant", cval=0
    )
    return Volume(v.spacing, vox), Mask(m.spacing, lab.astype(np.uint8))
