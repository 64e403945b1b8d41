"""Recompute mIoU and weighted mIoU from per-class IoU rows.

Reads the frozen benchmark rows used by the test suite and prints the
recomputed values next to the reported ones.

    python3 scripts/reproduce_table_metrics.py
"""

import sys
from pathlib import Path

import numpy as np

from occlabel.classes import DEFAULT_CLASS_FREQUENCIES
from occlabel.metrics import mean_iou, weighted_mean_iou

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from benchmark_rows import ROWS  # noqa: E402


def main():
    print(f"{'row':<16}{'mIoU':>8}{'recomp':>9}{'w-mIoU':>9}{'recomp':>9}")
    worst = 0.0
    for name, (m, wm, row) in ROWS.items():
        ious = np.array([np.nan if v is None else v / 100 for v in row] + [np.nan])
        rm = 100 * mean_iou(ious)
        rw = 100 * weighted_mean_iou(ious, DEFAULT_CLASS_FREQUENCIES)
        worst = max(worst, abs(rm - m), abs(rw - wm))
        print(f"{name:<16}{m:>8.1f}{rm:>9.3f}{wm:>9.1f}{rw:>9.3f}")
    print(f"largest deviation: {worst:.3f} points")


if __name__ == "__main__":
    main()
