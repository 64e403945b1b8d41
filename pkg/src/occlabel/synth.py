"""Analytic street scenes: exact lidar/radar/camera simulation and true occupancy.

Scenes are built from a ground half-space and axis-aligned boxes. Boxes may
translate at constant velocity. Built-in scenarios keep every surface 2 cm
inside a voxel, on the side of the voxel centre that lies within the solid, so
the voxel a surface point falls in is always a voxel whose centre the solid
contains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classes import CLASS_COLORS, CLASS_ID, FREE
from .cloudio import (FrameRecord, LabeledCloud, RadarCloud, SceneManifest, save_manifest,
                      write_cloud, write_ppm)
from .depthassoc import WORKING_SIZE
from .geometry import NATIVE_CAMERA, OPTICAL_TO_BODY, CameraIntrinsics, GridSpec, Pose
from .voxelize import OccupancyGrid, write_occupancy

SCENARIOS = ("static-street", "moving-box", "crossing-pedestrian")

RCS_BY_CLASS = {CLASS_ID["car"]: 10.0, CLASS_ID["pedestrian"]: -5.0, CLASS_ID["manmade"]: 20.0}
DEFAULT_RCS = 0.0

INSET = 0.02
GROUND_Z = -0.62


@dataclass(frozen=True)
class ScenePrimitive:
    """Ground half-space (``z <= center[2]``) or axis-aligned box.

    ``center`` and ``size`` give the box at t = 0; it moves with ``velocity``.
    """

    kind: str
    class_id: int
    center: tuple = (0.0, 0.0, 0.0)
    size: tuple = (1.0, 1.0, 1.0)
    velocity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("ground", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if not 0 <= self.class_id < FREE:
            raise ValueError("class id must be a semantic class 0..16")
        if self.kind == "box" and min(self.size) <= 0:
            raise ValueError("box dimensions must be positive")

    @classmethod
    def ground(cls, height: float = GROUND_Z, class_id: int = CLASS_ID["driveable_surface"]):
        return cls("ground", class_id, (0.0, 0.0, height))

    @classmethod
    def box(cls, lo, hi, class_id: int, velocity=(0.0, 0.0, 0.0)):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        return cls("box", class_id, tuple((lo + hi) / 2), tuple(hi - lo), tuple(velocity))

    @property
    def height(self) -> float:
        return self.center[2]

    def bounds(self, t: float = 0.0):
        c = np.asarray(self.center) + np.asarray(self.velocity) * t
        h = np.asarray(self.size) / 2
        return c - h, c + h

    def contains(self, points, t: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, float)
        if self.kind == "ground":
            return pts[..., 2] <= self.height
        lo, hi = self.bounds(t)
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def surface_residual(self, points, t: float = 0.0) -> np.ndarray:
        """Distance of each point from this primitive's surface."""
        pts = np.asarray(points, float)
        if self.kind == "ground":
            return np.abs(pts[..., 2] - self.height)
        lo, hi = self.bounds(t)
        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        dist_out = np.linalg.norm(outside, axis=-1)
        dist_in = np.min(np.minimum(pts - lo, hi - pts), axis=-1)
        return np.where(np.any(outside > 0, axis=-1), dist_out, np.abs(dist_in))


def aligned_box(lo_faces, hi_faces, class_id: int, velocity=(0.0, 0.0, 0.0)) -> ScenePrimitive:
    """Box inset by 2 cm from the given voxel faces."""
    return ScenePrimitive.box(np.asarray(lo_faces, float) + INSET, np.asarray(hi_faces, float) - INSET,
                              class_id, velocity)


def intersect(primitives, origins, dirs, t: float = 0.0):
    """Nearest hit of rays ``origins + s * dirs`` (s > 0).

    Returns ``(s, index)`` with ``s = inf`` and ``index = -1`` on a miss.
    """
    origins = np.asarray(origins, float).reshape(-1, 3)
    dirs = np.asarray(dirs, float).reshape(-1, 3)
    best = np.full(len(dirs), np.inf)
    which = np.full(len(dirs), -1, np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, prim in enumerate(primitives):
            if prim.kind == "ground":
                s = (prim.height - origins[:, 2]) / dirs[:, 2]
                ok = (dirs[:, 2] < 0) & (origins[:, 2] > prim.height) & (s > 0)
            else:
                lo, hi = prim.bounds(t)
                inv = 1.0 / dirs
                t1 = (lo - origins) * inv
                t2 = (hi - origins) * inv
                near = np.where(dirs == 0, np.where((origins >= lo) & (origins <= hi), -np.inf, np.inf),
                                np.minimum(t1, t2))
                far = np.where(dirs == 0, np.where((origins >= lo) & (origins <= hi), np.inf, -np.inf),
                               np.maximum(t1, t2))
                s = near.max(axis=1)
                ok = (s <= far.min(axis=1)) & (s > 0)
            closer = ok & (s < best)
            best[closer] = s[closer]
            which[closer] = k
    return best, which


@dataclass(frozen=True)
class BeamPattern:
    rings: int = 32
    elevation_deg: tuple = (-22.0, 22.0)
    azimuth_steps: int = 900
    azimuth_deg: tuple = (-180.0, 180.0)
    max_range: float = 120.0

    def __post_init__(self):
        if self.rings < 1 or self.azimuth_steps < 1:
            raise ValueError("beam pattern must be non-empty")

    def directions(self) -> np.ndarray:
        if self.rings == 1:
            elev = np.array([np.mean(self.elevation_deg)])
        else:
            elev = np.linspace(*self.elevation_deg, self.rings)
        a0, a1 = self.azimuth_deg
        full = math.isclose(a1 - a0, 360.0)
        az = np.linspace(a0, a1, self.azimuth_steps, endpoint=not full and self.azimuth_steps > 1)
        e, a = np.meshgrid(np.radians(elev), np.radians(az), indexing="ij")
        return np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1).reshape(-1, 3)


def simulate_lidar(primitives, sensor_pose: Pose, pattern: BeamPattern = BeamPattern(),
                   t: float = 0.0) -> LabeledCloud:
    """Exact first returns, expressed in the sensor frame (``sensor_pose``: sensor -> world)."""
    dirs = sensor_pose.rotation @ pattern.directions().T
    dirs = dirs.T
    origin = np.broadcast_to(sensor_pose.translation, dirs.shape)
    s, which = intersect(primitives, origin, dirs, t)
    ok = (which >= 0) & (s <= pattern.max_range)
    world = origin[ok] + s[ok, None] * dirs[ok]
    labels = np.array([p.class_id for p in primitives], np.uint8)[which[ok]] if ok.any() else np.zeros(0, np.uint8)
    local = sensor_pose.inverse().apply(world)
    intensity = np.clip(1.0 / (1.0 + s[ok] / 20.0), 0.0, 1.0)
    return LabeledCloud(local, intensity, labels, 0.0)


def _box_faces(lo, hi):
    """(axis, sign, face value) for the six faces of a box."""
    return [(a, sgn, hi[a] if sgn > 0 else lo[a]) for a in range(3) for sgn in (-1, 1)]


def simulate_radar(primitives, sensor_pose: Pose, detections_per_object: int = 8, noise_sigma: float = 0.0,
                   rng: np.random.Generator | int | None = 0, t: float = 0.0,
                   hfov_deg: float = 120.0, max_range: float = 100.0) -> RadarCloud:
    """Random detections on sensor-facing, unoccluded box faces.

    Radial velocity is the box velocity projected on the line of sight
    (positive receding). The ground returns nothing.
    """
    if detections_per_object < 0:
        raise ValueError("detections_per_object must be >= 0")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    sensor = sensor_pose.translation
    fwd = sensor_pose.rotation[:, 0]
    pts, vel, rcs = [], [], []
    for k, prim in enumerate(primitives):
        if prim.kind != "box" or detections_per_object == 0:
            continue
        lo, hi = prim.bounds(t)
        faces = [f for f in _box_faces(lo, hi) if f[1] * (sensor[f[0]] - f[2]) > 0]
        areas = np.array([np.prod(np.delete(hi - lo, a)) for a, _, _ in faces])
        if not faces:
            continue
        got = 0
        for _ in range(20):
            n = detections_per_object - got
            if n <= 0:
                break
            m = 4 * n
            pick = rng.choice(len(faces), size=m, p=areas / areas.sum())
            sample = lo + rng.random((m, 3)) * (hi - lo)
            for j, fi in enumerate(pick):
                a, _, v = faces[fi]
                sample[j, a] = v
            los = sample - sensor
            rng_dist = np.linalg.norm(los, axis=1)
            unit = los / rng_dist[:, None]
            cosang = unit @ fwd
            in_fov = (cosang >= math.cos(math.radians(hfov_deg / 2))) & (rng_dist <= max_range)
            s, which = intersect(primitives, np.broadcast_to(sensor, los.shape), los, t)
            visible = in_fov & (which == k) & (s >= 1.0 - 1e-9)
            sel = np.flatnonzero(visible)[:n]
            if len(sel):
                pts.append(sample[sel])
                vel.append(unit[sel] @ np.asarray(prim.velocity, float))
                rcs.append(np.full(len(sel), RCS_BY_CLASS.get(prim.class_id, DEFAULT_RCS)))
                got += len(sel)
    if not pts:
        return RadarCloud.empty()
    world = np.concatenate(pts)
    if noise_sigma > 0:
        world = world + rng.normal(0.0, noise_sigma, world.shape)
    local = sensor_pose.inverse().apply(world)
    return RadarCloud(local, np.concatenate(vel), np.concatenate(rcs), 1.0)


def analytic_occupancy(primitives, spec: GridSpec, t: float = 0.0, grid_to_world: Pose = Pose()) -> OccupancyGrid:
    """Label each voxel with the last primitive containing its centre at time ``t``."""
    centers = grid_to_world.apply(spec.voxel_centers())
    labels = np.full(spec.dims, FREE, np.uint8)
    for prim in primitives:
        labels[prim.contains(centers, t)] = prim.class_id
    return OccupancyGrid(spec, labels)


def render_image(primitives, camera_pose: Pose, K: CameraIntrinsics, t: float = 0.0) -> np.ndarray:
    """Flat-shaded class-colour render, ``(H, W, 3)`` floats in [0, 1]."""
    u, v = np.meshgrid(np.arange(K.width) + 0.5, np.arange(K.height) + 0.5)
    rays = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    dirs = rays @ camera_pose.rotation.T
    s, which = intersect(primitives, np.broadcast_to(camera_pose.translation, dirs.shape), dirs, t)
    palette = np.asarray(CLASS_COLORS, float) / 255.0
    cls = np.array([p.class_id for p in primitives] + [0])[which]
    depth = s * np.linalg.norm(rays, axis=1)
    shade = 0.35 + 0.65 / (1.0 + np.where(np.isfinite(depth), depth, 0.0) / 30.0)
    img = palette[cls] * shade[:, None]
    img[which < 0] = (0.55, 0.7, 0.9)
    return img.reshape(K.height, K.width, 3)


# ---------------------------------------------------------------- scenarios

LIDAR_MOUNT = Pose(np.eye(3), (0.0, 0.0, 1.2))
RADAR_MOUNT = Pose(np.eye(3), (2.0, 0.0, -0.1))
CAMERA_MOUNT = Pose(OPTICAL_TO_BODY, (1.5, 0.0, 0.8))
FRAME_DT = 0.2


@dataclass
class Scenario:
    name: str
    primitives: list
    ego_speed: float
    n_frames: int = 7
    key_frames: tuple = (1, 3, 5)
    dt: float = FRAME_DT
    grid: GridSpec = field(default_factory=GridSpec)

    def timestamp(self, i: int) -> float:
        return round(i * self.dt, 9)

    def ego_pose(self, i: int) -> Pose:
        return Pose(np.eye(3), (self.ego_speed * self.timestamp(i), 0.0, 0.0))


def _street():
    manmade = CLASS_ID["manmade"]
    return [
        ScenePrimitive.ground(),
        aligned_box((-30.0, 12.0, -0.6), (-6.0, 18.0, 7.4), manmade),
        aligned_box((2.0, 12.0, -0.6), (30.0, 18.4, 7.4), manmade),
        aligned_box((-24.0, -18.0, -0.6), (24.0, -10.4, 7.4), manmade),
        aligned_box((-36.0, -6.0, -0.6), (-34.4, -3.2, 3.0), manmade),
    ]


def build_scenario(name: str) -> Scenario:
    if name == "static-street":
        return Scenario(name, _street(), ego_speed=2.0)
    if name == "moving-box":
        car = aligned_box((4.0, -3.6, -0.6), (8.4, -1.6, 1.0), CLASS_ID["car"], velocity=(4.0, 0.0, 0.0))
        return Scenario(name, _street() + [car], ego_speed=0.0)
    if name == "crossing-pedestrian":
        ped = aligned_box((10.0, -2.0, -0.6), (10.4, -1.6, 1.4), CLASS_ID["pedestrian"], velocity=(0.0, 2.0, 0.0))
        return Scenario(name, _street() + [ped], ego_speed=2.0)
    raise KeyError(name)


def write_scene(out_dir, name: str, seed: int = 0, pattern: BeamPattern = BeamPattern(),
                radar_detections: int = 8, radar_noise: float = 0.0) -> SceneManifest:
    """Write manifest, clouds, images and ground-truth grids for a scenario."""
    sc = build_scenario(name)
    out = Path(out_dir)
    for sub in ("lidar", "radar", "image", "gt"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    K_work = NATIVE_CAMERA.scaled(*WORKING_SIZE)
    seeds = np.random.SeedSequence(seed).spawn(sc.n_frames)
    frames = []
    for i in range(sc.n_frames):
        t = sc.timestamp(i)
        ego = sc.ego_pose(i)
        stem = f"{i:06d}"
        write_cloud(out / "lidar" / f"{stem}.ocpc", simulate_lidar(sc.primitives, ego @ LIDAR_MOUNT, pattern, t))
        radar = simulate_radar(sc.primitives, ego @ RADAR_MOUNT, radar_detections, radar_noise,
                               np.random.default_rng(seeds[i]), t)
        write_cloud(out / "radar" / f"{stem}.ocpc", radar)
        write_ppm(out / "image" / f"{stem}.ppm", render_image(sc.primitives, ego @ CAMERA_MOUNT, K_work, t))
        is_key = i in sc.key_frames
        if is_key:
            write_occupancy(out / "gt" / f"occ_{stem}.occg", analytic_occupancy(sc.primitives, sc.grid, t, ego))
        frames.append(FrameRecord(i, t, ego, f"lidar/{stem}.ocpc", f"radar/{stem}.ocpc",
                                  f"image/{stem}.ppm", is_key))
    manifest = SceneManifest(LIDAR_MOUNT, RADAR_MOUNT, CAMERA_MOUNT, NATIVE_CAMERA, sc.grid, frames,
                             seed=seed, scenario=name, root=out)
    save_manifest(out / "manifest.json", manifest)
    return manifest
