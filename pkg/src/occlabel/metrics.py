"""Occupancy evaluation: confusion counts, (weighted) mIoU and occupied IoU."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .classes import DEFAULT_CLASS_FREQUENCIES, FREE, NUM_CLASSES, NUM_SEMANTIC, SHORT_NAMES
from .errors import EvaluationError

SEMANTIC_CLASSES = tuple(range(NUM_SEMANTIC))
MISSING = "–"


@dataclass
class ConfusionCounts:
    tp: np.ndarray = field(default_factory=lambda: np.zeros(NUM_CLASSES, np.int64))
    fp: np.ndarray = field(default_factory=lambda: np.zeros(NUM_CLASSES, np.int64))
    fn: np.ndarray = field(default_factory=lambda: np.zeros(NUM_CLASSES, np.int64))
    total: int = 0

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                               self.total + other.total)

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp.tolist(), "fp": self.fp.tolist(), "fn": self.fn.tolist(), "total": self.total}


def _check_pair(pred, gt, mask):
    if pred.spec != gt.spec:
        raise EvaluationError(f"grid mismatch: {pred.spec} vs {gt.spec}")
    if mask is not None and mask.spec != gt.spec:
        raise EvaluationError("mask grid does not match the evaluated grids")


def accumulate_confusion(pred, gt, mask=None) -> ConfusionCounts:
    _check_pair(pred, gt, mask)
    p = pred.labels.reshape(-1).astype(np.int64)
    g = gt.labels.reshape(-1).astype(np.int64)
    if mask is not None:
        sel = mask.mask.reshape(-1)
        p, g = p[sel], g[sel]
    cm = np.bincount(g * NUM_CLASSES + p, minlength=NUM_CLASSES ** 2).reshape(NUM_CLASSES, NUM_CLASSES)
    tp = np.diag(cm).copy()
    return ConfusionCounts(tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp, int(len(p)))


def class_iou(counts: ConfusionCounts) -> np.ndarray:
    """Per-class IoU; NaN for classes absent from both prediction and ground truth."""
    support = counts.support
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, counts.tp / np.maximum(support, 1), np.nan)


def mean_iou(ious, eval_classes=SEMANTIC_CLASSES) -> float | None:
    """Mean over the non-missing entries of ``ious`` (NaN = missing); None if all missing."""
    vals = np.asarray(ious, float)[list(eval_classes)]
    vals = vals[~np.isnan(vals)]
    return float(vals.mean()) if len(vals) else None


def weighted_mean_iou(ious, weights, eval_classes=SEMANTIC_CLASSES) -> float | None:
    """Frequency-weighted mean ``sum(w_c IoU_c) / sum(w_c)`` over non-missing classes.

    ``weights`` maps class id to weight (sequence or dict); a NaN or absent
    entry marks a missing weight, which is an error for a present class.
    """
    ious = np.asarray(ious, float)
    num = 0.0
    den = 0.0
    for c in eval_classes:
        if np.isnan(ious[c]):
            continue
        w = _weight(weights, c)
        if w is None:
            raise EvaluationError(f"no weight for present class {c} ({SHORT_NAMES[c]})")
        if w < 0:
            raise EvaluationError(f"negative weight for class {c}")
        num += w * ious[c]
        den += w
    return num / den if den > 0 else None


def _weight(weights, c):
    try:
        w = weights[c]
    except (KeyError, IndexError):
        return None
    return None if w is None or np.isnan(w) else float(w)


def miou(counts: ConfusionCounts, eval_classes=SEMANTIC_CLASSES) -> float | None:
    if not len(eval_classes):
        raise ValueError("eval_classes must be non-empty")
    return mean_iou(class_iou(counts), eval_classes)


def weighted_miou(counts: ConfusionCounts, weights=DEFAULT_CLASS_FREQUENCIES,
                  eval_classes=SEMANTIC_CLASSES) -> float | None:
    return weighted_mean_iou(class_iou(counts), weights, eval_classes)


def occupied_counts(pred, gt, mask=None):
    """``(tp, fp, fn)`` after merging every non-free class into one."""
    _check_pair(pred, gt, mask)
    p = pred.labels != FREE
    g = gt.labels != FREE
    if mask is not None:
        p, g = p[mask.mask], g[mask.mask]
    return int((p & g).sum()), int((p & ~g).sum()), int((~p & g).sum())


def occupied_iou(pred, gt, mask=None) -> float | None:
    tp, fp, fn = occupied_counts(pred, gt, mask)
    return tp / (tp + fp + fn) if tp + fp + fn else None


def build_report(counts: ConfusionCounts, occ=(0, 0, 0), weights=DEFAULT_CLASS_FREQUENCIES,
                 eval_classes=SEMANTIC_CLASSES, frames=None) -> dict:
    ious = class_iou(counts)
    tp, fp, fn = occ
    return {
        "frames": frames,
        "classes": {
            SHORT_NAMES[c]: (None if np.isnan(ious[c]) else float(ious[c])) for c in range(NUM_CLASSES)
        },
        "missing": [SHORT_NAMES[c] for c in eval_classes if np.isnan(ious[c])],
        "miou": mean_iou(ious, eval_classes),
        "weighted_miou": weighted_mean_iou(ious, weights, eval_classes),
        "occupied_iou": tp / (tp + fp + fn) if tp + fp + fn else None,
        "voxels": {"evaluated": counts.total, "occupied_tp": tp, "occupied_fp": fp, "occupied_fn": fn},
        "confusion": counts.to_dict(),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, ensure_ascii=False) + "\n"


def _pct(v):
    return MISSING if v is None else f"{100.0 * v:.1f}"


def format_table(report: dict, name: str = "prediction", eval_classes=SEMANTIC_CLASSES,
                 weights=DEFAULT_CLASS_FREQUENCIES) -> str:
    """Fixed-width table: mIoU, weighted mIoU, then per-class IoU in percent."""
    cols = ["mIoU", "w-mIoU"] + [SHORT_NAMES[c] for c in eval_classes]
    width = max(12, max(len(c) for c in cols) + 1)
    header = f"{'version':<14}" + "".join(f"{c:>{width}}" for c in cols)
    freq = f"{'freq %':<14}" + " " * (2 * width) + "".join(
        f"{weights[c]:>{width}.2f}" for c in eval_classes)
    vals = [report["miou"], report["weighted_miou"]] + [report["classes"][SHORT_NAMES[c]] for c in eval_classes]
    row = f"{name:<14}" + "".join(f"{_pct(v):>{width}}" for v in vals)
    occ = f"occupied IoU: {_pct(report['occupied_iou'])}"
    return "\n".join([header, freq, row, occ]) + "\n"
