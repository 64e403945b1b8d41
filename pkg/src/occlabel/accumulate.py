"""Static/dynamic split and multi-frame world-frame scene assembly."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classes import DEFAULT_DYNAMIC_CLASSES, NUM_SEMANTIC
from .cloudio import LabeledCloud, SceneManifest, compensate_ego_motion, read_cloud
from .errors import FormatError, IngestionError


@dataclass(frozen=True)
class AccumulationConfig:
    window: int = 10
    dynamic_classes: frozenset = field(default_factory=lambda: DEFAULT_DYNAMIC_CLASSES)
    compensate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dynamic_classes", frozenset(int(c) for c in self.dynamic_classes))
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if any(c < 0 or c >= NUM_SEMANTIC for c in self.dynamic_classes):
            raise ValueError(f"dynamic classes must lie in 0..{NUM_SEMANTIC - 1}")


def split_dynamic(cloud: LabeledCloud, cfg: AccumulationConfig):
    """Partition by label into ``(dynamic, static)`` clouds."""
    is_dyn = np.isin(cloud.label, np.fromiter(cfg.dynamic_classes, np.int64, len(cfg.dynamic_classes)))
    return cloud.subset(is_dyn), cloud.subset(~is_dyn)


@dataclass
class AssembledScene:
    """World-frame points of one key frame's window.

    ``frame_index[i]`` indexes ``origins``/``frame_ids`` for point ``i``.
    """

    cloud: LabeledCloud
    frame_index: np.ndarray
    origins: np.ndarray
    frame_ids: list
    key_frame: int


def window_frames(manifest: SceneManifest, key_frame: int, window: int) -> list:
    pos = manifest.position(key_frame)
    lo = max(0, pos - window)
    hi = min(len(manifest.frames), pos + window + 1)
    return manifest.frames[lo:hi]


def _load_world(manifest: SceneManifest, frame, cfg: AccumulationConfig, keep_dynamic: bool):
    path = manifest.resolve(frame.lidar_path)
    if path is None or not path.is_file():
        raise IngestionError(f"frame {frame.frame_id}: lidar cloud not found ({frame.lidar_path})")
    try:
        cloud = read_cloud(path, "lidar")
    except FormatError as exc:
        raise IngestionError(f"frame {frame.frame_id}: {exc}") from None
    if not keep_dynamic:
        cloud = split_dynamic(cloud, cfg)[1]
    sensor_to_world = frame.ego_pose.compose(manifest.lidar_to_ego)
    if cfg.compensate and len(cloud) and cloud.t_offset.max() > 0:
        end = manifest.pose_at(frame.timestamp + manifest.sweep_period).compose(manifest.lidar_to_ego)
        cloud = compensate_ego_motion(cloud, sensor_to_world, end, 0.0, manifest.sweep_period)
    return cloud.with_xyz(sensor_to_world.apply(cloud.xyz)), sensor_to_world.translation


def assemble_scene(manifest: SceneManifest, key_frame: int, cfg: AccumulationConfig,
                   threads: int = 1) -> AssembledScene:
    """Static points of every window frame plus dynamic points of the key frame."""
    frames = window_frames(manifest, key_frame, cfg.window)

    def work(frame):
        return _load_world(manifest, frame, cfg, keep_dynamic=frame.frame_id == key_frame)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, frames))
    else:
        results = [work(f) for f in frames]

    clouds = [c for c, _ in results]
    origins = np.array([o for _, o in results]).reshape(-1, 3)
    frame_index = np.concatenate(
        [np.full(len(c), i, np.int64) for i, c in enumerate(clouds)] or [np.zeros(0, np.int64)]
    )
    return AssembledScene(
        LabeledCloud.concat(clouds), frame_index, origins, [f.frame_id for f in frames], key_frame
    )
