"""Point-cloud files, scene manifests, PPM images and ego-motion compensation.

Cloud files are little-endian::

    "OCPC" | u32 version=1 | u8 schema (1 lidar, 2 radar) | u32 count | records

Lidar records are 24 bytes (3 x f32 position, f32 intensity, u8 label, u8 pad,
u16 t_offset in 0.1 ms ticks, 4 pad bytes); radar records are 6 x f32
(x, y, z, velocity, rcs, confidence).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classes import CLASS_NAMES, FREE, NUM_SEMANTIC
from .errors import FormatError
from .geometry import CameraIntrinsics, GridSpec, Pose, interpolate_pose

CLOUD_MAGIC = b"OCPC"
CLOUD_VERSION = 1
SCHEMA_LIDAR = 1
SCHEMA_RADAR = 2
_HEADER = struct.Struct("<4sIBI")
TICK = 1e-4  # t_offset resolution in seconds

LIDAR_DTYPE = np.dtype(
    [
        ("xyz", "<f4", (3,)),
        ("intensity", "<f4"),
        ("label", "u1"),
        ("pad0", "u1"),
        ("t_ticks", "<u2"),
        ("pad1", "<u4"),
    ]
)
RADAR_DTYPE = np.dtype(
    [("xyz", "<f4", (3,)), ("velocity", "<f4"), ("rcs", "<f4"), ("confidence", "<f4")]
)
assert LIDAR_DTYPE.itemsize == 24 and RADAR_DTYPE.itemsize == 24


@dataclass
class LabeledCloud:
    """Lidar points with per-point semantic labels (positions in meters)."""

    xyz: np.ndarray
    intensity: np.ndarray
    label: np.ndarray
    t_offset: np.ndarray

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        n = len(self.xyz)
        self.intensity = np.broadcast_to(np.asarray(self.intensity, np.float64), (n,)).copy()
        self.label = np.broadcast_to(np.asarray(self.label, np.uint8), (n,)).copy()
        self.t_offset = np.broadcast_to(np.asarray(self.t_offset, np.float64), (n,)).copy()

    @classmethod
    def empty(cls) -> LabeledCloud:
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0, np.uint8), np.zeros(0))

    def __len__(self):
        return len(self.xyz)

    def subset(self, mask) -> LabeledCloud:
        return LabeledCloud(self.xyz[mask], self.intensity[mask], self.label[mask], self.t_offset[mask])

    def with_xyz(self, xyz) -> LabeledCloud:
        return LabeledCloud(xyz, self.intensity, self.label, self.t_offset)

    @classmethod
    def concat(cls, clouds) -> LabeledCloud:
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.xyz for c in clouds]),
            np.concatenate([c.intensity for c in clouds]),
            np.concatenate([c.label for c in clouds]),
            np.concatenate([c.t_offset for c in clouds]),
        )


@dataclass
class RadarCloud:
    xyz: np.ndarray
    velocity: np.ndarray
    rcs: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        n = len(self.xyz)
        self.velocity = np.broadcast_to(np.asarray(self.velocity, np.float64), (n,)).copy()
        self.rcs = np.broadcast_to(np.asarray(self.rcs, np.float64), (n,)).copy()
        self.confidence = np.broadcast_to(np.asarray(self.confidence, np.float64), (n,)).copy()

    @classmethod
    def empty(cls) -> RadarCloud:
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0))

    def __len__(self):
        return len(self.xyz)

    def subset(self, mask) -> RadarCloud:
        return RadarCloud(self.xyz[mask], self.velocity[mask], self.rcs[mask], self.confidence[mask])

    def with_xyz(self, xyz) -> RadarCloud:
        return RadarCloud(xyz, self.velocity, self.rcs, self.confidence)

    def as_array(self) -> np.ndarray:
        """``(N, 6)`` rows of x, y, z, velocity, rcs, confidence."""
        return np.column_stack([self.xyz, self.velocity, self.rcs, self.confidence])


def encode_cloud(cloud) -> bytes:
    if isinstance(cloud, LabeledCloud):
        rec = np.zeros(len(cloud), LIDAR_DTYPE)
        rec["xyz"] = cloud.xyz
        rec["intensity"] = cloud.intensity
        rec["label"] = cloud.label
        ticks = np.rint(cloud.t_offset / TICK)
        if len(ticks) and (ticks.min() < 0 or ticks.max() > 0xFFFF):
            raise ValueError("t_offset outside the representable 0..6.5535 s range")
        rec["t_ticks"] = ticks.astype(np.uint16)
        schema = SCHEMA_LIDAR
    elif isinstance(cloud, RadarCloud):
        rec = np.zeros(len(cloud), RADAR_DTYPE)
        rec["xyz"] = cloud.xyz
        rec["velocity"] = cloud.velocity
        rec["rcs"] = cloud.rcs
        rec["confidence"] = cloud.confidence
        schema = SCHEMA_RADAR
    else:
        raise TypeError(f"not a cloud: {type(cloud).__name__}")
    return _HEADER.pack(CLOUD_MAGIC, CLOUD_VERSION, schema, len(rec)) + rec.tobytes()


def decode_cloud(data: bytes, schema: str | None = None, path=None):
    """Parse cloud bytes; ``schema`` ("lidar"/"radar") is checked when given."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", path, len(data))
    magic, version, schema_id, count = _HEADER.unpack_from(data)
    if magic != CLOUD_MAGIC:
        raise FormatError(f"bad magic {magic!r}", path, 0)
    if version != CLOUD_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if schema_id not in (SCHEMA_LIDAR, SCHEMA_RADAR):
        raise FormatError(f"unknown schema {schema_id}", path, 8)
    want = {"lidar": SCHEMA_LIDAR, "radar": SCHEMA_RADAR}.get(schema) if schema else schema_id
    if want != schema_id:
        raise FormatError(f"expected {schema} cloud, file has schema {schema_id}", path, 8)
    dtype = LIDAR_DTYPE if schema_id == SCHEMA_LIDAR else RADAR_DTYPE
    need = _HEADER.size + count * dtype.itemsize
    if len(data) < need:
        raise FormatError(f"truncated payload: header declares {count} points", path, len(data))
    if len(data) > need:
        raise FormatError("trailing bytes after last record", path, need)
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=_HEADER.size)

    def fail(i, field_offset, message):
        raise FormatError(message, path, _HEADER.size + int(i) * dtype.itemsize + field_offset)

    bad = np.flatnonzero(~np.isfinite(rec["xyz"]).all(axis=1))
    if len(bad):
        fail(bad[0], 0, "non-finite position")
    if schema_id == SCHEMA_LIDAR:
        bad = np.flatnonzero(rec["label"] >= NUM_SEMANTIC)
        if len(bad):
            fail(bad[0], 16, f"label {rec['label'][bad[0]]} out of range 0..{NUM_SEMANTIC - 1}")
        bad = np.flatnonzero(~((rec["intensity"] >= 0) & (rec["intensity"] <= 1)))
        if len(bad):
            fail(bad[0], 12, "intensity outside [0, 1]")
        bad = np.flatnonzero((rec["pad0"] != 0) | (rec["pad1"] != 0))
        if len(bad):
            fail(bad[0], 17, "nonzero padding")
        return LabeledCloud(
            rec["xyz"].astype(np.float64),
            rec["intensity"].astype(np.float64),
            rec["label"].copy(),
            rec["t_ticks"].astype(np.float64) * TICK,
        )
    bad = np.flatnonzero(~((rec["confidence"] >= 0) & (rec["confidence"] <= 1)))
    if len(bad):
        fail(bad[0], 20, "confidence outside [0, 1]")
    bad = np.flatnonzero(~(np.isfinite(rec["velocity"]) & np.isfinite(rec["rcs"])))
    if len(bad):
        fail(bad[0], 12, "non-finite velocity or rcs")
    return RadarCloud(
        rec["xyz"].astype(np.float64),
        rec["velocity"].astype(np.float64),
        rec["rcs"].astype(np.float64),
        rec["confidence"].astype(np.float64),
    )


def read_cloud(path, schema: str | None = None):
    path = Path(path)
    return decode_cloud(path.read_bytes(), schema, path)


def write_cloud(path, cloud) -> None:
    Path(path).write_bytes(encode_cloud(cloud))


# ---------------------------------------------------------------- manifests


@dataclass
class FrameRecord:
    frame_id: int
    timestamp: float
    ego_pose: Pose
    lidar_path: str | None = None
    radar_path: str | None = None
    image_path: str | None = None
    is_key: bool = False


@dataclass
class SceneManifest:
    lidar_to_ego: Pose
    radar_to_ego: Pose
    camera_to_ego: Pose
    intrinsics: CameraIntrinsics
    grid: GridSpec
    frames: list = field(default_factory=list)
    class_names: tuple = CLASS_NAMES
    sweep_period: float = 0.05
    seed: int | None = None
    scenario: str | None = None
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        if len(self.class_names) != len(CLASS_NAMES) or self.class_names[FREE] != "free":
            raise ValueError("class table must have 18 entries with index 17 named 'free'")
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must be strictly increasing")

    def frame(self, frame_id: int) -> FrameRecord:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        raise KeyError(frame_id)

    def position(self, frame_id: int) -> int:
        for i, f in enumerate(self.frames):
            if f.frame_id == frame_id:
                return i
        raise KeyError(frame_id)

    def resolve(self, rel: str | None) -> Path | None:
        return None if rel is None else self.root / rel

    @property
    def key_frames(self) -> list:
        return [f.frame_id for f in self.frames if f.is_key]

    def pose_at(self, t: float) -> Pose:
        """Ego pose at time ``t``, interpolated between neighbouring frames."""
        frames = self.frames
        if t <= frames[0].timestamp or len(frames) == 1:
            return frames[0].ego_pose
        for a, b in zip(frames, frames[1:]):
            if t <= b.timestamp:
                alpha = (t - a.timestamp) / (b.timestamp - a.timestamp)
                return interpolate_pose(a.ego_pose, b.ego_pose, alpha)
        return frames[-1].ego_pose

    def to_dict(self) -> dict:
        d = {
            "version": 1,
            "class_names": list(self.class_names),
            "sweep_period": self.sweep_period,
            "extrinsics": {
                "lidar": self.lidar_to_ego.as_matrix().tolist(),
                "radar": self.radar_to_ego.as_matrix().tolist(),
                "camera": self.camera_to_ego.as_matrix().tolist(),
            },
            "intrinsics": self.intrinsics.to_dict(),
            "grid": self.grid.to_dict(),
            "frames": [
                {
                    "frame_id": f.frame_id,
                    "timestamp": f.timestamp,
                    "ego_pose": f.ego_pose.as_matrix().tolist(),
                    "lidar": f.lidar_path,
                    "radar": f.radar_path,
                    "image": f.image_path,
                    "is_key": f.is_key,
                }
                for f in self.frames
            ],
        }
        if self.seed is not None:
            d["seed"] = self.seed
        if self.scenario is not None:
            d["scenario"] = self.scenario
        return d


def _pose(value, where, path) -> Pose:
    try:
        pose = Pose.from_matrix(value)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{where}: {exc}", path) from None
    if not pose.is_valid():
        raise FormatError(f"{where}: rotation is not orthonormal", path)
    return pose


def load_manifest(path) -> SceneManifest:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest: {exc}", path) from None
    try:
        ext = d["extrinsics"]
        frames = [
            FrameRecord(
                int(f["frame_id"]),
                float(f["timestamp"]),
                _pose(f["ego_pose"], f"frames[{i}].ego_pose", path),
                f.get("lidar"),
                f.get("radar"),
                f.get("image"),
                bool(f.get("is_key", False)),
            )
            for i, f in enumerate(d["frames"])
        ]
        return SceneManifest(
            lidar_to_ego=_pose(ext["lidar"], "extrinsics.lidar", path),
            radar_to_ego=_pose(ext["radar"], "extrinsics.radar", path),
            camera_to_ego=_pose(ext["camera"], "extrinsics.camera", path),
            intrinsics=CameraIntrinsics.from_dict(d["intrinsics"]),
            grid=GridSpec.from_dict(d["grid"]),
            frames=frames,
            class_names=d.get("class_names", CLASS_NAMES),
            sweep_period=float(d.get("sweep_period", 0.05)),
            seed=d.get("seed"),
            scenario=d.get("scenario"),
            root=path.parent,
        )
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", path) from None
    except (ValueError, TypeError) as exc:
        raise FormatError(str(exc), path) from None


def save_manifest(path, manifest: SceneManifest) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- images


def write_ppm(path, rgb) -> None:
    """Write an ``(H, W, 3)`` image, floats in [0, 1] or uint8, as binary PPM."""
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        rgb = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary 8-bit PPM into an ``(H, W, 3)`` uint8 array."""
    path = Path(path)
    data = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header", path, pos)
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P6":
        raise FormatError("not a binary PPM (P6)", path, 0)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError("only 8-bit PPM is supported", path)
    if len(data) - pos != w * h * 3:
        raise FormatError("pixel payload size mismatch", path, pos)
    return np.frombuffer(data, np.uint8, offset=pos).reshape(h, w, 3).copy()


# ---------------------------------------------------------------- ego motion


def compensate_ego_motion(cloud, pose_at_start: Pose, pose_at_end: Pose, reference_time: float,
                          sweep_period: float = 0.05):
    """Re-express a sweep as if every point were captured at ``reference_time``.

    Poses map sensor to world at sweep start (``t_offset = 0``) and end
    (``t_offset = sweep_period``); in between they are interpolated
    geodesically. ``reference_time`` is measured from the sweep start.
    """
    if len(cloud) == 0:
        return cloud
    t = cloud.t_offset
    if t.min() < -1e-12 or t.max() > sweep_period + 1e-12:
        raise ValueError("t_offset outside the sweep interval")
    ref = interpolate_pose(pose_at_start, pose_at_end, reference_time / sweep_period).check()
    ref_inv = ref.inverse()
    out = np.empty_like(cloud.xyz)
    for tv in np.unique(t):
        sel = t == tv
        capture = interpolate_pose(pose_at_start, pose_at_end, tv / sweep_period).check()
        out[sel] = ref_inv.compose(capture).apply(cloud.xyz[sel])
    return cloud.with_xyz(out)


def compensate_radar(cloud: RadarCloud, pose_at_capture: Pose, pose_at_reference: Pose) -> RadarCloud:
    """Move a whole radar scan (no per-point times) to the reference instant."""
    return cloud.with_xyz(pose_at_reference.inverse().compose(pose_at_capture).apply(cloud.xyz))
