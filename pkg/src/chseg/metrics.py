"""Voxel and lesion level evaluation of predicted masks.

Degenerate ratios are defined instead of NaN: Dice and precision are 1 when
both masks are empty, precision is 0 when only the prediction is empty,
sensitivity is 1 without positives and specificity is 1 without negatives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InputError
from .volume import BinaryMask, check_aligned

DEFAULT_MIN_OVERLAP = 0.5
SCORE_FIELDS = ("dice", "sensitivity", "specificity", "precision", "detection_rate")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class LesionRecord:
    lesion_id: int
    gt_voxels: int
    overlap_voxels: int
    detected: bool


@dataclass
class MetricsReport:
    dice: float
    sensitivity: float
    specificity: float
    precision: float
    detection_rate: float = 1.0
    per_lesion: list[LesionRecord] = field(default_factory=list)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SCORE_FIELDS}


def _bits(mask):
    return mask.bits if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)


def confusion(pred: BinaryMask, gt: BinaryMask, region: BinaryMask | None = None) -> ConfusionCounts:
    """Confusion counts over ``region`` (the whole grid when ``None``)."""
    p, g = _bits(pred), _bits(gt)
    if p.shape != g.shape:
        raise InputError(f"pred dims {p.shape} != gt dims {g.shape}")
    r = np.ones_like(p) if region is None else _bits(region)
    if r.shape != p.shape:
        raise InputError(f"region dims {r.shape} != mask dims {p.shape}")
    p, g = p & r, g & r
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(r)) - tp - fp - fn
    return ConfusionCounts(tp, fp, tn, fn)


def scores(c: ConfusionCounts) -> MetricsReport:
    tp, fp, tn, fn = c.tp, c.fp, c.tn, c.fn
    dice = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0
    sens = tp / (tp + fn) if (tp + fn) else 1.0
    spec = tn / (tn + fp) if (tn + fp) else 1.0
    if tp + fp:
        prec = tp / (tp + fp)
    else:
        prec = 1.0 if fn == 0 else 0.0
    return MetricsReport(dice, sens, spec, prec)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise InputError("connectivity must be 6 or 26")


def label_components(mask: BinaryMask, connectivity: int = 6) -> tuple[np.ndarray, int]:
    """Connected components labelled ``1..n``.

    Labels are ordered by the smallest x-fastest linear index of each
    component. Returns ``(labels, n)`` with ``labels`` shaped like the mask.
    """
    bits = _bits(mask)
    labels, n = ndimage.label(bits, structure=_structure(connectivity))
    if n == 0:
        return labels.astype(np.int32), 0
    linear = np.arange(bits.size).reshape(bits.shape, order="F")
    first = ndimage.minimum(linear, labels, index=np.arange(1, n + 1))
    order = np.argsort(first, kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
    return remap[labels], int(n)


def detection_rate(pred: BinaryMask, gt: BinaryMask, min_overlap: float = DEFAULT_MIN_OVERLAP,
                   connectivity: int = 6):
    """Fraction of ground-truth components covered at least ``min_overlap``.

    Returns ``(rate, per_lesion)``; the rate is 1.0 when there are no lesions.
    """
    p, g = _bits(pred), _bits(gt)
    if p.shape != g.shape:
        raise InputError(f"pred dims {p.shape} != gt dims {g.shape}")
    labels, n = label_components(g, connectivity)
    if n == 0:
        return 1.0, []
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    hits = np.bincount(labels[p], minlength=n + 1)
    records = [
        LesionRecord(lid, int(sizes[lid]), int(hits[lid]), bool(hits[lid] >= min_overlap * sizes[lid]))
        for lid in range(1, n + 1)
    ]
    return sum(r.detected for r in records) / n, records


def evaluate(pred: BinaryMask, gt: BinaryMask, region: BinaryMask | None = None,
             min_overlap: float = DEFAULT_MIN_OVERLAP, connectivity: int = 6) -> MetricsReport:
    """All metrics for one volume. Detection counts lesions inside ``region``."""
    if region is not None:
        check_aligned(pred, region)
        gt = BinaryMask(_bits(gt) & _bits(region))
        pred = BinaryMask(_bits(pred) & _bits(region))
    report = scores(confusion(pred, gt, region))
    report.detection_rate, report.per_lesion = detection_rate(pred, gt, min_overlap, connectivity)
    return report


def summarize(reports: list[MetricsReport]) -> dict:
    """Mean and population std of each score across volumes."""
    out = {}
    for key in SCORE_FIELDS:
        values = np.array([getattr(r, key) for r in reports], dtype=np.float64)
        out[key] = (float(values.mean()), float(values.std())) if values.size else (math.nan, math.nan)
    return out


def format_mean_std(summary: dict) -> dict:
    return {k: f"{m:.2f} ± {s:.2f}" for k, (m, s) in summary.items()}


def write_report_csv(path, reports: dict[str, MetricsReport], with_summary: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["volume_id", *SCORE_FIELDS])
        for vid, rep in reports.items():
            w.writerow([vid, *(repr(float(getattr(rep, k))) for k in SCORE_FIELDS)])
        if with_summary and reports:
            summary = format_mean_std(summarize(list(reports.values())))
            w.writerow(["mean±std", *(summary[k] for k in SCORE_FIELDS)])


def write_lesion_csv(path, reports: dict[str, MetricsReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["volume_id", "lesion_id", "gt_voxels", "overlap_voxels", "detected"])
        for vid, rep in reports.items():
            for rec in rep.per_lesion:
                row = asdict(rec)
                w.writerow([vid, row["lesion_id"], row["gt_voxels"], row["overlap_voxels"], int(row["detected"])])
