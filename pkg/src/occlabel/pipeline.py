"""End-to-end labeling of key frames and the JSON pipeline configuration."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from .accumulate import AccumulationConfig, assemble_scene
from .classes import CLASS_ID, DEFAULT_DYNAMIC_CLASSES
from .cloudio import SceneManifest
from .depthassoc import FEATURE_STRIDE, WORKING_SIZE, DepthBinning
from .errors import ConfigError
from .geometry import GridSpec
from .voxelize import OccupancyGrid, VoxelHistogramGrid, bin_points, carve_free, refine_lonely, resolve_labels

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    grid: GridSpec | None = None  # None: use the manifest's grid
    window: int = 10
    dynamic_classes: tuple = tuple(sorted(DEFAULT_DYNAMIC_CLASSES))
    compensate: bool = True
    refine: bool = True
    depth_binning: DepthBinning = field(default_factory=DepthBinning)
    stride: int = FEATURE_STRIDE
    working_size: tuple = WORKING_SIZE
    threads: int = 1
    seed: int = 0

    @property
    def accumulation(self) -> AccumulationConfig:
        return AccumulationConfig(self.window, frozenset(self.dynamic_classes), self.compensate)

    def to_dict(self) -> dict:
        return {
            "grid": None if self.grid is None else self.grid.to_dict(),
            "window": self.window,
            "dynamic_classes": list(self.dynamic_classes),
            "compensate": self.compensate,
            "refine": self.refine,
            "depth_binning": {"d_min": self.depth_binning.d_min, "d_max": self.depth_binning.d_max,
                              "bins": self.depth_binning.bins},
            "stride": self.stride,
            "working_size": list(self.working_size),
            "threads": self.threads,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        kw = dict(d)
        try:
            if kw.get("grid") is not None:
                kw["grid"] = GridSpec.from_dict(kw["grid"])
            if "depth_binning" in kw:
                kw["depth_binning"] = DepthBinning(**kw["depth_binning"])
            if "dynamic_classes" in kw:
                kw["dynamic_classes"] = tuple(sorted(_class_id(c) for c in kw["dynamic_classes"]))
            if "working_size" in kw:
                kw["working_size"] = tuple(int(v) for v in kw["working_size"])
            cfg = cls(**kw)
            cfg.accumulation  # validates window and classes
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        if cfg.threads < 1:
            raise ConfigError("threads must be >= 1")
        if cfg.stride < 1:
            raise ConfigError("stride must be >= 1")
        return cfg


def _class_id(c) -> int:
    """Accept a class id or a class name."""
    if isinstance(c, str):
        if c not in CLASS_ID:
            raise ValueError(f"unknown class name {c!r}")
        return CLASS_ID[c]
    return int(c)


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    try:
        return PipelineConfig.from_dict(d)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class LabelResult:
    occupancy: OccupancyGrid
    histogram: VoxelHistogramGrid
    stats: dict


def label_key_frame(manifest: SceneManifest, key_frame: int, cfg: PipelineConfig,
                    threads: int | None = None) -> LabelResult:
    """Accumulate the key frame's window and produce its occupancy grid.

    The grid is expressed in the key frame's ego frame.
    """
    threads = cfg.threads if threads is None else threads
    spec = cfg.grid or manifest.grid
    t0 = time.perf_counter()
    scene = assemble_scene(manifest, key_frame, cfg.accumulation, threads)
    t1 = time.perf_counter()
    to_grid = manifest.frame(key_frame).ego_pose.inverse()
    xyz = to_grid.apply(scene.cloud.xyz)
    origins = to_grid.apply(scene.origins)

    hist = VoxelHistogramGrid(spec)
    bin_points(hist, xyz, scene.cloud.label)
    carve_free(hist, xyz, scene.frame_index, origins, threads)
    t2 = time.perf_counter()
    occ = resolve_labels(hist)
    if cfg.refine:
        occ = refine_lonely(occ)
    t3 = time.perf_counter()
    stats = {
        "frame_id": key_frame,
        "window_frames": scene.frame_ids,
        "points": len(scene.cloud),
        "dropped_points": hist.dropped,
        "unobserved_voxels": occ.unobserved,
        "occupied_voxels": int(occ.occupied.sum()),
        "timing_s": {"assemble": t1 - t0, "voxelize": t2 - t1, "resolve": t3 - t2},
    }
    log.info("frame %d: %d points, %d dropped, %d unobserved voxels", key_frame, len(scene.cloud),
             hist.dropped, occ.unobserved)
    return LabelResult(occ, hist, stats)
