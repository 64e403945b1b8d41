"""Sparse depth maps from lidar/radar, RGB-D assembly and depth binning.

Depth files (little-endian): ``"DPTH" | u32 version=1 | u32 width | u32 height``
followed by ``height * width`` f32 values row-major. Depth-bin maps use the
magic ``"DBIN"`` and one byte per pixel (255 = no measurement).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloudio import RadarCloud
from .errors import ConfigError, FormatError
from .geometry import CameraIntrinsics, Pose, project_points

DEPTH_VERSION = 1
_HEADER = struct.Struct("<4sIII")
EMPTY_BIN = 255

WORKING_SIZE = (704, 256)  # width, height fed to the image backbone
FEATURE_STRIDE = 16


@dataclass
class DepthImage:
    """``depth[v, u]`` in meters; exactly 0.0 where nothing was measured."""

    depth: np.ndarray

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.depth.ndim != 2:
            raise ValueError("depth image must be 2-D")

    @classmethod
    def zeros(cls, width: int, height: int) -> DepthImage:
        return cls(np.zeros((height, width), np.float32))

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]


@dataclass
class RgbdImage:
    rgb: np.ndarray  # (H, W, 3) floats in [0, 1]
    depth: np.ndarray  # (H, W) meters, 0.0 = empty

    @property
    def channels(self) -> np.ndarray:
        return np.concatenate([self.rgb, self.depth[..., None]], axis=-1)


@dataclass(frozen=True)
class DepthBinning:
    d_min: float = 2.0
    d_max: float = 42.0
    bins: int = 80

    def __post_init__(self):
        if not 0 < self.d_min < self.d_max:
            raise ValueError("need 0 < d_min < d_max")
        if not 1 <= self.bins < EMPTY_BIN:
            raise ValueError(f"bins must be in 1..{EMPTY_BIN - 1}")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.d_min, self.d_max, self.bins + 1)


@dataclass(frozen=True)
class Calibration:
    """Sensor mounting needed to bring radar points into the camera image."""

    radar_to_ego: Pose
    camera_to_ego: Pose
    intrinsics: CameraIntrinsics  # at native camera resolution

    @classmethod
    def from_manifest(cls, manifest) -> Calibration:
        return cls(manifest.radar_to_ego, manifest.camera_to_ego, manifest.intrinsics)

    @property
    def radar_to_camera(self) -> Pose:
        return self.camera_to_ego.inverse().compose(self.radar_to_ego)


def project_depth_map(points, K: CameraIntrinsics, sensor_to_cam: Pose, width: int, height: int) -> DepthImage:
    """Z-buffered sparse depth: nearest pixel, smallest camera depth wins."""
    img = np.zeros((height, width), np.float32)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if not len(pts):
        return DepthImage(img)
    uv, z, ok = project_points(K, sensor_to_cam.apply(pts))
    px = np.floor(uv + 0.5)
    ok &= (px[:, 0] >= 0) & (px[:, 0] < width) & (px[:, 1] >= 0) & (px[:, 1] < height)
    if not ok.any():
        return DepthImage(img)
    u = px[ok, 0].astype(np.int64)
    v = px[ok, 1].astype(np.int64)
    zbuf = np.full((height, width), np.inf)
    np.minimum.at(zbuf, (v, u), z[ok])
    hit = np.isfinite(zbuf)
    img[hit] = zbuf[hit]
    return DepthImage(img)


def make_pseudo_depth(radar: RadarCloud, calib: Calibration, stride: int = FEATURE_STRIDE,
                      size: tuple = WORKING_SIZE) -> DepthImage:
    """Radar depth image aligned with the stride-downsampled working image."""
    width, height = size
    if stride < 1 or width % stride or height % stride:
        raise ConfigError(f"stride {stride} does not divide working size {width}x{height}")
    w, h = width // stride, height // stride
    K = calib.intrinsics.scaled(width, height).scaled(w, h)
    return project_depth_map(radar.xyz, K, calib.radar_to_camera, w, h)


def make_rgbd(image, radar: RadarCloud, calib: Calibration) -> RgbdImage:
    """Attach radar depth as a fourth channel of a working-resolution image."""
    rgb = np.asarray(image)
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float64) / 255.0
    height, width = rgb.shape[:2]
    depth = make_pseudo_depth(radar, calib, 1, (width, height))
    return RgbdImage(rgb, depth.depth)


def bin_depth(depth: DepthImage, binning: DepthBinning = DepthBinning()) -> np.ndarray:
    """Linear depth categories as uint8, ``EMPTY_BIN`` where depth is 0."""
    d = depth.depth.astype(np.float64)
    cat = np.floor(binning.bins * (d - binning.d_min) / (binning.d_max - binning.d_min))
    cat = np.clip(cat, 0, binning.bins - 1).astype(np.uint8)
    cat[d == 0.0] = EMPTY_BIN
    return cat


# ---------------------------------------------------------------- files


def encode_depth(img: DepthImage) -> bytes:
    return _HEADER.pack(b"DPTH", DEPTH_VERSION, img.width, img.height) + img.depth.astype("<f4").tobytes()


def decode_depth(data: bytes, path=None) -> DepthImage:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", path, len(data))
    magic, version, w, h = _HEADER.unpack_from(data)
    if magic != b"DPTH":
        raise FormatError(f"bad magic {magic!r}", path, 0)
    if version != DEPTH_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    need = _HEADER.size + 4 * w * h
    if len(data) != need:
        raise FormatError(f"expected {need} bytes, got {len(data)}", path, min(len(data), need))
    depth = np.frombuffer(data, "<f4", offset=_HEADER.size).reshape(h, w)
    bad = np.flatnonzero(~(depth.reshape(-1) >= 0) | ~np.isfinite(depth.reshape(-1)))
    if len(bad):
        raise FormatError("negative or non-finite depth", path, _HEADER.size + 4 * int(bad[0]))
    return DepthImage(depth.astype(np.float32))


def write_depth(path, img: DepthImage) -> None:
    Path(path).write_bytes(encode_depth(img))


def read_depth(path) -> DepthImage:
    path = Path(path)
    return decode_depth(path.read_bytes(), path)


def write_bins(path, cat: np.ndarray) -> None:
    h, w = cat.shape
    Path(path).write_bytes(_HEADER.pack(b"DBIN", DEPTH_VERSION, w, h) + cat.astype(np.uint8).tobytes())


def read_bins(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", path, len(data))
    magic, version, w, h = _HEADER.unpack_from(data)
    if magic != b"DBIN" or version != DEPTH_VERSION:
        raise FormatError("not a depth-bin file", path, 0)
    if len(data) != _HEADER.size + w * h:
        raise FormatError("payload size mismatch", path, _HEADER.size)
    return np.frombuffer(data, np.uint8, offset=_HEADER.size).reshape(h, w).copy()
