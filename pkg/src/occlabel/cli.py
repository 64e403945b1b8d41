"""Command-line entry point: ``occlabel {autolabel,eval,depth,synth,fov-mask}``.

Exit codes: 0 success, 2 format/ingestion error, 3 config error, 4 unmatched
or incomparable evaluation inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from .cloudio import load_manifest, read_cloud, read_ppm, write_ppm
from .depthassoc import (Calibration, DepthImage, bin_depth, make_pseudo_depth, make_rgbd, project_depth_map,
                         write_bins, write_depth)
from .errors import ConfigError, EvaluationError, FormatError, OccLabelError
from .metrics import ConfusionCounts, accumulate_confusion, build_report, format_table, occupied_counts, report_json
from .pipeline import label_key_frame, load_config
from .synth import SCENARIOS, write_scene
from .voxelize import fov_mask, read_mask, read_occupancy, write_mask, write_occupancy

log = logging.getLogger("occlabel")

OCC_NAME = re.compile(r"^occ_(\d+)\.occg$")


def _frame_range(text):
    if text is None:
        return None
    m = re.fullmatch(r"(\d+)\.\.(\d+)", text)
    if not m:
        raise ConfigError(f"--frames expects 'a..b', got {text!r}")
    return int(m.group(1)), int(m.group(2))


def cmd_autolabel(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = load_config(args.config)
    threads = args.threads or cfg.threads
    keys = manifest.key_frames
    rng = _frame_range(args.frames)
    if rng is not None:
        keys = [k for k in keys if rng[0] <= k <= rng[1]]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = []
    for key in keys:
        res = label_key_frame(manifest, key, cfg, threads)
        path = out / f"occ_{key:06d}.occg"
        write_occupancy(path, res.occupancy)
        read_occupancy(path)  # header validation of what was written
        stats.append(res.stats)
    (out / "stats.json").write_text(json.dumps({"threads": threads, "frames": stats}, indent=1) + "\n")
    log.info("wrote %d occupancy grids to %s", len(keys), out)
    return 0


def _grid_files(d: Path) -> dict:
    files = {}
    for p in sorted(Path(d).iterdir()):
        m = OCC_NAME.match(p.name)
        if m:
            files[int(m.group(1))] = p
    return files


def cmd_eval(args) -> int:
    pred = _grid_files(Path(args.pred))
    gt = _grid_files(Path(args.gt))
    if set(pred) != set(gt) or not gt:
        missing = sorted(set(pred) ^ set(gt))
        raise EvaluationError(f"unmatched frames between prediction and ground truth: {missing}")
    mask = read_mask(args.mask) if args.mask else None
    counts = ConfusionCounts()
    occ = [0, 0, 0]
    for fid in sorted(gt):
        p, g = read_occupancy(pred[fid]), read_occupancy(gt[fid])
        counts = counts + accumulate_confusion(p, g, mask)
        occ = [a + b for a, b in zip(occ, occupied_counts(p, g, mask))]
    report = build_report(counts, tuple(occ), frames=sorted(gt))
    table = format_table(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report_json(report), encoding="utf-8")
        (out / "report.txt").write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    return 0


def cmd_depth(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = load_config(args.config)
    try:
        frame = manifest.frame(args.frame)
    except KeyError:
        raise ConfigError(f"frame {args.frame} not in manifest") from None
    calib = Calibration.from_manifest(manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{frame.frame_id:06d}"
    width, height = cfg.working_size

    def lidar_depth():
        cloud = read_cloud(manifest.resolve(frame.lidar_path), "lidar")
        lidar_to_cam = manifest.camera_to_ego.inverse().compose(manifest.lidar_to_ego)
        return project_depth_map(cloud.xyz, manifest.intrinsics.scaled(width, height), lidar_to_cam,
                                 width, height)

    if args.mode == "lidar-gt":
        write_depth(out / f"{stem}_lidar.dpth", lidar_depth())
    elif args.mode == "bins":
        write_bins(out / f"{stem}_bins.dbin", bin_depth(lidar_depth(), cfg.depth_binning))
    elif args.mode == "pseudo":
        radar = read_cloud(manifest.resolve(frame.radar_path), "radar")
        write_depth(out / f"{stem}_pseudo.dpth", make_pseudo_depth(radar, calib, cfg.stride, cfg.working_size))
    elif args.mode == "rgbd":
        img_path = manifest.resolve(frame.image_path)
        if img_path is None or not img_path.is_file():
            raise FormatError(f"frame {frame.frame_id}: image not found ({frame.image_path})")
        radar = read_cloud(manifest.resolve(frame.radar_path), "radar")
        rgbd = make_rgbd(read_ppm(img_path), radar, calib)
        write_ppm(out / f"{stem}_rgbd.ppm", rgbd.rgb)
        write_depth(out / f"{stem}_rgbd.dpth", DepthImage(rgbd.depth))
    return 0


def cmd_synth(args) -> int:
    if args.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    write_scene(args.out, args.scenario, args.seed)
    log.info("wrote scenario %s (seed %d) to %s", args.scenario, args.seed, args.out)
    return 0


def cmd_fov_mask(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = load_config(args.config)
    spec = cfg.grid or manifest.grid
    write_mask(args.out, fov_mask(spec, manifest.intrinsics, manifest.camera_to_ego))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occlabel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("autolabel", help="generate occupancy grids for key frames")
    a.add_argument("--manifest", required=True)
    a.add_argument("--config")
    a.add_argument("--out", required=True)
    a.add_argument("--frames", help="key frame id range a..b (inclusive)")
    a.add_argument("--threads", type=int)
    a.set_defaults(func=cmd_autolabel)

    e = sub.add_parser("eval", help="score predicted grids against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--mask")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("depth", help="depth maps, pseudo-depth, RGB-D or depth bins for a frame")
    d.add_argument("--manifest", required=True)
    d.add_argument("--config")
    d.add_argument("--frame", type=int, required=True)
    d.add_argument("--mode", choices=("lidar-gt", "pseudo", "rgbd", "bins"), required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_depth)

    s = sub.add_parser("synth", help="write a synthetic scene")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fov-mask", help="camera field-of-view voxel mask")
    f.add_argument("--manifest", required=True)
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fov_mask)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        log.error("--threads must be >= 1")
        return ConfigError.exit_code
    try:
        return args.func(args)
    except OccLabelError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
