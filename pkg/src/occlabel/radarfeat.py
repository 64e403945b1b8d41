"""Pillar assignment and per-point feature decoration for radar clouds.

Feature files: ``"PFEA" | u32 version=1 | u32 rows`` then per row nine f32
features followed by a u32 pillar id, little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloudio import RadarCloud
from .errors import FormatError

FEATURE_DIM = 9
_HEADER = struct.Struct("<4sII")
ROW_DTYPE = np.dtype([("features", "<f4", (FEATURE_DIM,)), ("pillar", "<u4")])


@dataclass
class PillarGrid:
    """Assignment of points to x-y columns.

    ``point_pillar[i]`` is the flat pillar id ``ix * ny + iy`` of point ``i``,
    or -1 when the point falls outside ``extent``.
    """

    pillar_size: float
    extent: tuple  # (x_min, y_min, x_max, y_max)
    dims: tuple  # (nx, ny)
    point_pillar: np.ndarray

    @property
    def pillars(self) -> np.ndarray:
        """Ids of non-empty pillars in ascending order."""
        return np.unique(self.point_pillar[self.point_pillar >= 0])

    def members(self, pillar_id: int) -> np.ndarray:
        return np.flatnonzero(self.point_pillar == pillar_id)


@dataclass
class PillarFeatures:
    """Rows of (x, y, z, velocity, rcs, confidence, xc, yc, zc) per in-bounds point."""

    features: np.ndarray  # (M, 9)
    pillar_id: np.ndarray  # (M,)
    point_index: np.ndarray  # (M,) row -> input point


def pillarize(cloud: RadarCloud, pillar_size: float = 0.4,
              extent: tuple = (-40.0, -40.0, 40.0, 40.0)) -> PillarGrid:
    if not pillar_size > 0:
        raise ValueError("pillar_size must be positive")
    x0, y0, x1, y1 = (float(v) for v in extent)
    nx = int(round((x1 - x0) / pillar_size))
    ny = int(round((y1 - y0) / pillar_size))
    ij = np.floor((cloud.xyz[:, :2] - (x0, y0)) / pillar_size).astype(np.int64)
    inside = (ij[:, 0] >= 0) & (ij[:, 0] < nx) & (ij[:, 1] >= 0) & (ij[:, 1] < ny)
    pid = np.where(inside, ij[:, 0] * ny + ij[:, 1], -1)
    return PillarGrid(float(pillar_size), (x0, y0, x1, y1), (nx, ny), pid)


def featurize(grid: PillarGrid, cloud: RadarCloud) -> PillarFeatures:
    """Raw radar channels plus each point's offset from its pillar's mean."""
    if len(grid.point_pillar) != len(cloud):
        raise ValueError("pillar grid was built from a different cloud")
    rows = np.flatnonzero(grid.point_pillar >= 0)
    pid = grid.point_pillar[rows]
    xyz = cloud.xyz[rows]
    _, group = np.unique(pid, return_inverse=True)
    group = group.reshape(-1)
    n_groups = group.max() + 1 if len(group) else 0
    sums = np.zeros((n_groups, 3))
    np.add.at(sums, group, xyz)
    counts = np.bincount(group, minlength=n_groups)[:, None]
    means = sums / np.maximum(counts, 1)
    feats = np.column_stack([cloud.as_array()[rows], xyz - means[group]])
    return PillarFeatures(feats.reshape(-1, FEATURE_DIM), pid, rows)


def write_features(path, pf: PillarFeatures) -> None:
    rec = np.zeros(len(pf.features), ROW_DTYPE)
    rec["features"] = pf.features
    rec["pillar"] = pf.pillar_id
    Path(path).write_bytes(_HEADER.pack(b"PFEA", 1, len(rec)) + rec.tobytes())


def read_features(path):
    """Return ``(features (M, 9) float32, pillar_id (M,) uint32)``."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", path, len(data))
    magic, version, n = _HEADER.unpack_from(data)
    if magic != b"PFEA" or version != 1:
        raise FormatError("not a pillar feature file", path, 0)
    if len(data) != _HEADER.size + n * ROW_DTYPE.itemsize:
        raise FormatError("payload size mismatch", path, _HEADER.size)
    rec = np.frombuffer(data, ROW_DTYPE, count=n, offset=_HEADER.size)
    return rec["features"].copy(), rec["pillar"].copy()
