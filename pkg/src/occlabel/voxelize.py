"""Histogram voxelisation, free-space carving and label resolution.

Occupancy grid files (little-endian)::

    "OCCG" | u32 version=1 | 3 x u32 dims | 3 x f32 origin | f32 voxel_size | labels

with one byte per voxel at index ``(xi * Ny + yi) * Nz + zi``. FOV masks use
the same layout under the magic ``"FOVM"`` with bytes 0/1.
"""

from __future__ import annotations

import itertools
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classes import CLASS_COLORS, FREE, NUM_CLASSES, NUM_SEMANTIC
from .errors import FormatError
from .geometry import CameraIntrinsics, GridSpec, Pose, carve_counts, project_points

GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sI3I3ff")

NEIGHBOR_OFFSETS = np.array(
    [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)], dtype=np.int64
)


@dataclass
class VoxelHistogramGrid:
    spec: GridSpec
    hits: np.ndarray = None
    free: np.ndarray = None
    dropped: int = 0

    def __post_init__(self):
        shape = self.spec.dims
        if self.hits is None:
            self.hits = np.zeros((*shape, NUM_SEMANTIC), np.uint32)
        if self.free is None:
            self.free = np.zeros(shape, np.uint32)
        if self.hits.shape != (*shape, NUM_SEMANTIC) or self.free.shape != shape:
            raise ValueError("histogram arrays do not match grid dims")

    def __add__(self, other: VoxelHistogramGrid) -> VoxelHistogramGrid:
        if other.spec != self.spec:
            raise ValueError("cannot merge histograms over different grids")
        return VoxelHistogramGrid(self.spec, self.hits + other.hits, self.free + other.free,
                                  self.dropped + other.dropped)

    @property
    def hit_total(self) -> np.ndarray:
        return self.hits.sum(axis=-1, dtype=np.uint64)


@dataclass(eq=False)
class OccupancyGrid:
    spec: GridSpec
    labels: np.ndarray
    unobserved: int | None = field(default=None, compare=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(self.spec.dims)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.labels, other.labels)

    @classmethod
    def all_free(cls, spec: GridSpec) -> OccupancyGrid:
        return cls(spec, np.full(spec.dims, FREE, np.uint8))

    @property
    def occupied(self) -> np.ndarray:
        return self.labels != FREE


@dataclass
class FovMask:
    spec: GridSpec
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.spec.dims)


# ---------------------------------------------------------------- labeling


def bin_points(grid: VoxelHistogramGrid, xyz, labels) -> VoxelHistogramGrid:
    """Count each in-bounds point against its voxel's class; others go to ``dropped``."""
    idx = grid.spec.voxel_index(xyz)
    labels = np.asarray(labels, dtype=np.int64)
    inside = grid.spec.in_bounds(idx)
    grid.dropped += int((~inside).sum())
    flat = grid.spec.flat_index(idx[inside]) * NUM_SEMANTIC + labels[inside]
    np.add.at(grid.hits.reshape(-1), flat, 1)
    return grid


def carve_free(grid: VoxelHistogramGrid, xyz, frame_index, origins, threads: int = 1) -> VoxelHistogramGrid:
    """Increment ``free`` for voxels each beam crosses strictly before its return.

    Beam ``i`` runs from ``origins[frame_index[i]]`` to ``xyz[i]``. Work is split
    into private count arrays and summed, so the result ignores ``threads``.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    frame_index = np.asarray(frame_index, dtype=np.int64)
    chunks = np.array_split(np.arange(len(xyz)), max(1, threads))

    def work(sel):
        return carve_counts(grid.spec, xyz[sel], frame_index[sel], origins)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    total = grid.free.reshape(-1)
    for p in parts:
        total += p
    return grid


def resolve_labels(grid: VoxelHistogramGrid) -> OccupancyGrid:
    """Majority class where any point landed (lowest id wins ties), else free."""
    hit_any = grid.hits.any(axis=-1)
    labels = np.where(hit_any, grid.hits.argmax(axis=-1), FREE).astype(np.uint8)
    unobserved = int((~hit_any & (grid.free == 0)).sum())
    return OccupancyGrid(grid.spec, labels, unobserved)


def _neighbor_labels(labels: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Labels of the 26 neighbours of each voxel in ``idx``; outside reads as free."""
    padded = np.pad(labels, 1, constant_values=FREE)
    nb = idx[:, None, :] + NEIGHBOR_OFFSETS[None, :, :] + 1
    return padded[nb[..., 0], nb[..., 1], nb[..., 2]]


def refine_lonely(occ: OccupancyGrid) -> OccupancyGrid:
    """One pass reassigning occupied voxels with no same-class 26-neighbour.

    A lonely voxel takes the majority class of its occupied neighbours (lowest
    id on ties) or becomes free when it has none. Reads only the input grid.
    """
    labels = occ.labels
    padded = np.pad(labels, 1, constant_values=FREE)
    nx, ny, nz = labels.shape
    has_same = np.zeros(labels.shape, bool)
    for dx, dy, dz in NEIGHBOR_OFFSETS:
        has_same |= padded[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny, 1 + dz:1 + dz + nz] == labels
    lonely = (labels != FREE) & ~has_same
    out = labels.copy()
    idx = np.argwhere(lonely)
    if len(idx):
        nb = _neighbor_labels(labels, idx)
        counts = np.zeros((len(idx), NUM_CLASSES), np.int64)
        np.add.at(counts, (np.repeat(np.arange(len(idx)), nb.shape[1]), nb.reshape(-1)), 1)
        counts[:, FREE] = 0
        new = np.where(counts.any(axis=1), counts.argmax(axis=1), FREE)
        out[idx[:, 0], idx[:, 1], idx[:, 2]] = new
    return OccupancyGrid(occ.spec, out, occ.unobserved)


def fov_mask(spec: GridSpec, K: CameraIntrinsics, cam_pose_world: Pose) -> FovMask:
    """Voxels whose centre projects in front of the camera and inside the image."""
    centers = spec.voxel_centers().reshape(-1, 3)
    cam = cam_pose_world.inverse().apply(centers)
    uv, _, in_front = project_points(K, cam)
    inside = in_front & (uv[:, 0] >= 0) & (uv[:, 0] < K.width) & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)
    return FovMask(spec, inside)


# ---------------------------------------------------------------- files


def _encode(magic: bytes, spec: GridSpec, payload: np.ndarray) -> bytes:
    header = _GRID_HEADER.pack(magic, GRID_VERSION, *spec.dims, *spec.origin, spec.voxel_size)
    return header + np.ascontiguousarray(payload, dtype=np.uint8).tobytes()


def _short_float(v: float) -> float:
    """Shortest decimal that rounds to the same f32, so 0.4 reads back as 0.4."""
    return float(str(np.float32(v)))


def _decode(data: bytes, magic: bytes, path=None):
    if len(data) < _GRID_HEADER.size:
        raise FormatError("truncated header", path, len(data))
    m, version, nx, ny, nz, ox, oy, oz, vs = _GRID_HEADER.unpack_from(data)
    if m != magic:
        raise FormatError(f"bad magic {m!r}, expected {magic!r}", path, 0)
    if version != GRID_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    ox, oy, oz, vs = (_short_float(v) for v in (ox, oy, oz, vs))
    try:
        spec = GridSpec((ox, oy, oz), vs, (nx, ny, nz))
    except ValueError as exc:
        raise FormatError(str(exc), path, 8) from None
    need = _GRID_HEADER.size + spec.n_voxels
    if len(data) != need:
        raise FormatError(f"payload is {len(data) - _GRID_HEADER.size} bytes, expected {spec.n_voxels}",
                          path, min(len(data), need))
    payload = np.frombuffer(data, np.uint8, offset=_GRID_HEADER.size).reshape(spec.dims)
    return spec, payload


def encode_occupancy(occ: OccupancyGrid) -> bytes:
    return _encode(b"OCCG", occ.spec, occ.labels)


def decode_occupancy(data: bytes, path=None) -> OccupancyGrid:
    spec, payload = _decode(data, b"OCCG", path)
    bad = np.flatnonzero(payload.reshape(-1) > FREE)
    if len(bad):
        raise FormatError(f"label {payload.reshape(-1)[bad[0]]} out of range", path,
                          _GRID_HEADER.size + int(bad[0]))
    return OccupancyGrid(spec, payload.copy())


def write_occupancy(path, occ: OccupancyGrid) -> None:
    Path(path).write_bytes(encode_occupancy(occ))


def read_occupancy(path) -> OccupancyGrid:
    path = Path(path)
    return decode_occupancy(path.read_bytes(), path)


def write_mask(path, mask: FovMask) -> None:
    Path(path).write_bytes(_encode(b"FOVM", mask.spec, mask.mask.astype(np.uint8)))


def read_mask(path) -> FovMask:
    path = Path(path)
    spec, payload = _decode(path.read_bytes(), b"FOVM", path)
    if payload.max(initial=0) > 1:
        raise FormatError("mask bytes must be 0 or 1", path)
    return FovMask(spec, payload.astype(bool))


def write_ply(path, occ: OccupancyGrid) -> None:
    """ASCII PLY with one coloured vertex per occupied voxel centre."""
    idx = np.argwhere(occ.occupied)
    centers = np.asarray(occ.spec.origin) + (idx + 0.5) * occ.spec.voxel_size
    colors = np.asarray(CLASS_COLORS, np.uint8)[occ.labels[occ.occupied]]
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(idx)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    lines += [f"{x:.4f} {y:.4f} {z:.4f} {r} {g} {b}" for (x, y, z), (r, g, b) in zip(centers, colors)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
