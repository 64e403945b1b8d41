"""Effect of the accumulation window on label agreement and coverage.

    python3 scripts/window_sweep.py --scenario moving-box --windows 0 1 2 4 6

Reports, per window size, how many voxels were observed and how often the
auto-label agrees with the analytic grid on them.
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from occlabel.pipeline import PipelineConfig, label_key_frame
from occlabel.synth import SCENARIOS, write_scene
from occlabel.voxelize import read_occupancy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=SCENARIOS, default="static-street")
    ap.add_argument("--windows", type=int, nargs="+", default=[0, 1, 2, 4, 6])
    ap.add_argument("--no-refine", action="store_true")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        manifest = write_scene(Path(tmp), args.scenario, seed=0)
        key = manifest.key_frames[len(manifest.key_frames) // 2]
        gt = read_occupancy(Path(tmp) / "gt" / f"occ_{key:06d}.occg").labels
        print(f"{args.scenario}, key frame {key}")
        print(f"{'window':>6}{'points':>10}{'observed':>10}{'agree':>9}{'occupied':>10}")
        for w in args.windows:
            res = label_key_frame(manifest, key, PipelineConfig(window=w, refine=not args.no_refine))
            observed = (res.histogram.hit_total > 0) | (res.histogram.free > 0)
            agree = np.mean(res.occupancy.labels[observed] == gt[observed])
            print(f"{w:>6}{res.stats['points']:>10}{int(observed.sum()):>10}{agree:>9.4f}"
                  f"{res.stats['occupied_voxels']:>10}")


if __name__ == "__main__":
    main()
