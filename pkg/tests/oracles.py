"""Independent reference computations used only by tests.

None of these call the package's traversal, binning or projection code.
"""

import math

import numpy as np


def sampled_traversal(origin, endpoint, grid_origin, voxel_size, dims, per_voxel=50):
    """Voxels containing points sampled every ``voxel_size / per_voxel`` along
    ``[origin, endpoint)``, in first-visit order, plus the endpoint voxel."""
    o = np.asarray(origin, float)
    e = np.asarray(endpoint, float)
    g = np.asarray(grid_origin, float)
    length = float(np.linalg.norm(e - o))
    n = max(1, int(math.ceil(length / (voxel_size / per_voxel))))
    ts = np.arange(n) / n
    pts = o + ts[:, None] * (e - o)
    idx = np.floor((pts - g) / voxel_size).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(dims)), axis=1)
    seen = []
    seen_set = set()
    for row in map(tuple, idx[inside]):
        if row not in seen_set:
            seen_set.add(row)
            seen.append(row)
    hit = tuple(int(v) for v in np.floor((e - g) / voxel_size))
    hit_in = all(0 <= hit[a] < dims[a] for a in range(3))
    return [v for v in seen if v != hit], (hit if hit_in else None)


def chord_length(origin, endpoint, voxel, grid_origin, voxel_size):
    """Length of ``[origin, endpoint]`` inside the closed voxel box (slab clipping)."""
    o = np.asarray(origin, float)
    d = np.asarray(endpoint, float) - o
    lo = np.asarray(grid_origin, float) + np.asarray(voxel, float) * voxel_size
    hi = lo + voxel_size
    t0, t1 = 0.0, 1.0
    for a in range(3):
        if d[a] == 0:
            if not lo[a] <= o[a] <= hi[a]:
                return 0.0
            continue
        ta, tb = sorted(((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]))
        t0, t1 = max(t0, ta), min(t1, tb)
    return max(0.0, t1 - t0) * float(np.linalg.norm(d))


def entry_parameter(origin, endpoint, voxel, grid_origin, voxel_size):
    o = np.asarray(origin, float)
    d = np.asarray(endpoint, float) - o
    lo = np.asarray(grid_origin, float) + np.asarray(voxel, float) * voxel_size
    hi = lo + voxel_size
    t0 = 0.0
    for a in range(3):
        if d[a] != 0:
            t0 = max(t0, min((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]))
    return t0


def brute_force_bin(points, labels, grid_origin, voxel_size, dims, n_classes=17):
    """Per-point Python loop with ``math.floor``; returns hit counts and drops."""
    counts = np.zeros((*dims, n_classes), np.int64)
    dropped = 0
    for p, c in zip(points, labels):
        ijk = [math.floor((float(p[a]) - grid_origin[a]) / voxel_size) for a in range(3)]
        if all(0 <= ijk[a] < dims[a] for a in range(3)):
            counts[ijk[0], ijk[1], ijk[2], int(c)] += 1
        else:
            dropped += 1
    return counts, dropped


def project_center(fx, fy, cx, cy, width, height, R_world_to_cam, t_world_to_cam, center):
    """Scalar pinhole check of one world point."""
    x, y, z = (sum(R_world_to_cam[r][k] * center[k] for k in range(3)) + t_world_to_cam[r] for r in range(3))
    if z <= 1e-6:
        return False
    u = fx * x / z + cx
    v = fy * y / z + cy
    return 0 <= u < width and 0 <= v < height
