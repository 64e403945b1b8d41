"""Rigid transforms, pinhole projection and exact voxel ray traversal."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.spatial.transform import Rotation

ORTHO_TOL = 1e-9
BEHIND_EPS = 1e-6

# Columns are the body-frame (x fwd, y left, z up) directions of the optical
# axes (x right, y down, z forward).
OPTICAL_TO_BODY = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


@dataclass(frozen=True)
class Pose:
    """Rigid SE(3) transform mapping child-frame points into the parent frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, m) -> Pose:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> Pose:
        return cls(Rotation.from_rotvec(rotvec).as_matrix(), translation)

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> Pose:
        c, s = math.cos(yaw), math.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: Pose) -> Pose:
        """Return ``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: Pose) -> Pose:
        return self.compose(other)

    def inverse(self) -> Pose:
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def is_valid(self, tol: float = ORTHO_TOL) -> bool:
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            return False
        return bool(np.abs(r.T @ r - np.eye(3)).max() <= tol and abs(np.linalg.det(r) - 1.0) <= tol)

    def check(self, tol: float = ORTHO_TOL) -> Pose:
        if not self.is_valid(tol):
            raise ValueError("rotation is not orthonormal with det +1")
        return self


def transform_points(pose: Pose, points) -> np.ndarray:
    return pose.apply(points)


def interpolate_pose(p0: Pose, p1: Pose, alpha: float) -> Pose:
    """Geodesic interpolation: linear translation, constant angular rate rotation."""
    delta = Rotation.from_matrix(p0.rotation.T @ p1.rotation).as_rotvec()
    rot = p0.rotation @ Rotation.from_rotvec(alpha * delta).as_matrix()
    trans = (1.0 - alpha) * p0.translation + alpha * p1.translation
    return Pose(rot, trans)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float, vfov_deg: float | None = None) -> CameraIntrinsics:
        """Centered pinhole camera with the given full fields of view."""
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        fy = fx if vfov_deg is None else (height / 2.0) / math.tan(math.radians(vfov_deg) / 2.0)
        return cls(fx, fy, width / 2.0, height / 2.0, width, height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width: int, height: int) -> CameraIntrinsics:
        """Intrinsics for the same camera resampled to ``width`` x ``height``."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> CameraIntrinsics:
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


# Native camera of the recording vehicle: 1936 x 1216 px, 64 x 44 deg FOV.
NATIVE_CAMERA = CameraIntrinsics.from_fov(1936, 1216, 64.0, 44.0)


def project_point(K: CameraIntrinsics, cam_point):
    """Project one camera-frame point; returns ``(u, v, depth)`` or None if behind."""
    x, y, z = (float(c) for c in cam_point)
    if z <= BEHIND_EPS:
        return None
    return K.fx * x / z + K.cx, K.fy * y / z + K.cy, z


def project_points(K: CameraIntrinsics, cam_points):
    """Vectorised projection; returns ``(uv, depth, in_front)``."""
    pts = np.asarray(cam_points, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    in_front = z > BEHIND_EPS
    safe_z = np.where(in_front, z, 1.0)
    uv = np.empty((len(pts), 2))
    uv[:, 0] = K.fx * pts[:, 0] / safe_z + K.cx
    uv[:, 1] = K.fy * pts[:, 1] / safe_z + K.cy
    return uv, z, in_front


def unproject(K: CameraIntrinsics, u, v, depth) -> np.ndarray:
    u, v, depth = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float), np.asarray(depth, float))
    x = (u - K.cx) / K.fx * depth
    y = (v - K.cy) / K.fy * depth
    return np.stack([x, y, depth], axis=-1)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple = (-40.0, -40.0, -1.0)
    voxel_size: float = 0.4
    dims: tuple = (200, 200, 16)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        if len(self.origin) != 3 or len(self.dims) != 3:
            raise ValueError("origin and dims must have three components")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if min(self.dims) < 1:
            raise ValueError("dims must all be >= 1")

    @classmethod
    def from_bounds(cls, lower, upper, voxel_size: float) -> GridSpec:
        lower = np.asarray(lower, float)
        extent = np.asarray(upper, float) - lower
        dims = np.rint(extent / voxel_size).astype(int)
        if np.any(np.abs(dims * voxel_size - extent) > 1e-6):
            raise ValueError("bounds are not a whole number of voxels")
        return cls(tuple(lower), voxel_size, tuple(dims))

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.dims, float) * self.voxel_size

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.extent

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def voxel_index(self, points) -> np.ndarray:
        """Integer voxel coordinates under the half-open ``[min, max)`` convention."""
        pts = np.asarray(points, dtype=np.float64)
        return np.floor((pts - np.asarray(self.origin)) / self.voxel_size).astype(np.int64)

    def in_bounds(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=-1)

    def flat_index(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        _, ny, nz = self.dims
        return (idx[..., 0] * ny + idx[..., 1]) * nz + idx[..., 2]

    def voxel_centers(self) -> np.ndarray:
        """All voxel centres, shape ``(Nx, Ny, Nz, 3)``."""
        axes = [self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "voxel_size": self.voxel_size, "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, d: dict) -> GridSpec:
        return cls(tuple(d["origin"]), d["voxel_size"], tuple(d["dims"]))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    endpoint: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "endpoint", np.asarray(self.endpoint, dtype=np.float64).reshape(3))
        if np.linalg.norm(self.endpoint - self.origin) <= 1e-9:
            raise ValueError("ray origin and endpoint coincide")


@numba.njit(cache=True, nogil=True)
def _traverse(o, e, gorigin, vs, dims, out):
    """Amanatides-Woo stepping of segment ``o -> e``.

    Writes traversed voxels into ``out`` and returns
    ``(count, has_hit, hx, hy, hz)``. The hit voxel is never written.
    """
    lo = np.empty(3)
    d = np.empty(3)
    hit = np.empty(3, np.int64)
    has_hit = True
    for a in range(3):
        lo[a] = (o[a] - gorigin[a]) / vs
        le = (e[a] - gorigin[a]) / vs
        d[a] = le - lo[a]
        h = np.int64(math.floor(le))
        hit[a] = h
        if h < 0 or h >= dims[a]:
            has_hit = False

    t0 = 0.0
    t1 = 1.0
    for a in range(3):
        if d[a] == 0.0:
            if lo[a] < 0.0 or lo[a] >= dims[a]:
                return 0, has_hit, hit[0], hit[1], hit[2]
        else:
            ta = -lo[a] / d[a]
            tb = (dims[a] - lo[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 >= t1:
        return 0, has_hit, hit[0], hit[1], hit[2]

    cur = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    tmax = np.empty(3)
    for a in range(3):
        c = np.int64(math.floor(lo[a] + t0 * d[a]))
        if c < 0:
            c = 0
        elif c >= dims[a]:
            c = dims[a] - 1
        cur[a] = c
        if d[a] > 0.0:
            step[a] = 1
            tmax[a] = (c + 1 - lo[a]) / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            tmax[a] = (c - lo[a]) / d[a]
        else:
            step[a] = 0
            tmax[a] = np.inf

    n = 0
    cap = out.shape[0]
    while n < cap:
        if has_hit and cur[0] == hit[0] and cur[1] == hit[1] and cur[2] == hit[2]:
            break
        out[n, 0] = cur[0]
        out[n, 1] = cur[1]
        out[n, 2] = cur[2]
        n += 1
        # exact ties advance x, then y, then z
        a = 0
        if tmax[1] < tmax[a]:
            a = 1
        if tmax[2] < tmax[a]:
            a = 2
        if tmax[a] >= t1:
            break
        cur[a] += step[a]
        if cur[a] < 0 or cur[a] >= dims[a]:
            break
        if step[a] > 0:
            tmax[a] = (cur[a] + 1 - lo[a]) / d[a]
        else:
            tmax[a] = (cur[a] - lo[a]) / d[a]
    return n, has_hit, hit[0], hit[1], hit[2]


@numba.njit(cache=True, nogil=True)
def _carve(points, frame_idx, origins, gorigin, vs, dims, free):
    buf = np.empty((dims[0] + dims[1] + dims[2] + 3, 3), np.int64)
    ny = dims[1]
    nz = dims[2]
    for i in range(points.shape[0]):
        o = origins[frame_idx[i]]
        p = points[i]
        dx = p[0] - o[0]
        dy = p[1] - o[1]
        dz = p[2] - o[2]
        if dx * dx + dy * dy + dz * dz <= 1e-18:
            continue
        n, _, _, _, _ = _traverse(o, p, gorigin, vs, dims, buf)
        for j in range(n):
            free[(buf[j, 0] * ny + buf[j, 1]) * nz + buf[j, 2]] += 1


def _grid_args(grid: GridSpec):
    return np.asarray(grid.origin, np.float64), float(grid.voxel_size), np.asarray(grid.dims, np.int64)


def traverse_ray(grid: GridSpec, ray: Ray):
    """Voxels crossed by ``ray`` before its endpoint, plus the endpoint voxel.

    Returns ``(traversal, hit)`` where ``traversal`` is a list of ``(i, j, k)``
    tuples ordered from the origin and ``hit`` is the voxel containing the
    endpoint, or None when the endpoint lies outside the grid.
    """
    gorigin, vs, dims = _grid_args(grid)
    buf = np.empty((int(dims.sum()) + 3, 3), np.int64)
    n, has_hit, hx, hy, hz = _traverse(ray.origin, ray.endpoint, gorigin, vs, dims, buf)
    traversal = [tuple(int(c) for c in row) for row in buf[:n]]
    return traversal, ((int(hx), int(hy), int(hz)) if has_hit else None)


def carve_counts(grid: GridSpec, points, frame_idx, origins) -> np.ndarray:
    """Free-traversal counts (flat, z fastest) for beams ``origins[frame_idx[i]] -> points[i]``."""
    gorigin, vs, dims = _grid_args(grid)
    free = np.zeros(grid.n_voxels, np.uint32)
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts):
        _carve(pts, np.ascontiguousarray(frame_idx, dtype=np.int64),
               np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3),
               gorigin, vs, dims, free)
    return free
