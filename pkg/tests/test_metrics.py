import itertools
from collections import deque

import numpy as np
import pytest

from chseg.metrics import (
    ConfusionCounts,
    MetricsReport,
    confusion,
    detection_rate,
    evaluate,
    label_components,
    scores,
    summarize,
    write_lesion_csv,
    write_report_csv,
)
from chseg.volume import BinaryMask


def confusion_oracle(pred, gt, region):
    tp = fp = tn = fn = 0
    for idx in itertools.product(*map(range, pred.shape)):
        if not region[idx]:
            continue
        p, g = bool(pred[idx]), bool(gt[idx])
        tp += p and g
        fp += p and not g
        fn += g and not p
        tn += not p and not g
    return tp, fp, tn, fn


def flood_fill_oracle(bits):
    """Breadth-first 6-connected components as a set of frozensets of voxels."""
    seen = set()
    parts = set()
    shape = bits.shape
    for start in itertools.product(*map(range, shape)):
        if not bits[start] or start in seen:
            continue
        comp = {start}
        queue = deque([start])
        seen.add(start)
        while queue:
            v = queue.popleft()
            for axis in range(3):
                for d in (-1, 1):
                    w = list(v)
                    w[axis] += d
                    w = tuple(w)
                    if 0 <= w[axis] < shape[axis] and bits[w] and w not in seen:
                        seen.add(w)
                        comp.add(w)
                        queue.append(w)
        parts.add(frozenset(comp))
    return parts


def partition(labels, n):
    return {frozenset(map(tuple, np.argwhere(labels == lid))) for lid in range(1, n + 1)}


def test_confusion_identity_and_empty():
    rng = np.random.default_rng(0)
    m = BinaryMask(rng.random((5, 5, 5)) < 0.3)
    c = confusion(m, m)
    assert c.fp == c.fn == 0
    empty = BinaryMask(np.zeros((3, 3, 3), bool))
    region = BinaryMask(np.ones((3, 3, 3), bool))
    assert confusion(empty, empty, region) == ConfusionCounts(0, 0, 27, 0)


def test_confusion_random_matches_oracle(rng):
    for _ in range(20):
        p, g, r = (rng.random((8, 8, 8)) < 0.4 for _ in range(3))
        c = confusion(BinaryMask(p), BinaryMask(g), BinaryMask(r))
        assert (c.tp, c.fp, c.tn, c.fn) == confusion_oracle(p, g, r)
        assert c.total == r.sum()


def test_scores_examples():
    rep = scores(ConfusionCounts(tp=6, fp=2, tn=10, fn=4))
    assert rep.dice == 12 / 18
    assert rep.precision == 0.75
    assert rep.sensitivity == 0.6
    assert rep.specificity == 10 / 12
    rep = scores(ConfusionCounts(tp=0, fp=5, tn=10, fn=5))
    assert rep.dice == rep.precision == rep.sensitivity == 0.0


def test_scores_degenerate():
    rep = scores(ConfusionCounts(0, 0, 8, 0))
    assert rep.dice == rep.precision == rep.sensitivity == rep.specificity == 1.0
    rep = scores(ConfusionCounts(3, 0, 0, 0))
    assert rep.specificity == 1.0
    rep = scores(ConfusionCounts(0, 0, 4, 3))
    assert rep.precision == 0.0 and rep.dice == 0.0


def test_dice_symmetric(rng):
    for _ in range(20):
        p, g = (BinaryMask(rng.random((6, 6, 6)) < 0.3) for _ in range(2))
        assert scores(confusion(p, g)).dice == scores(confusion(g, p)).dice


def test_label_components_connectivity():
    bits = np.zeros((10, 10, 10), bool)
    bits[0:2, 0:2, 0:2] = True
    bits[5:7, 5:7, 5:7] = True
    assert label_components(BinaryMask(bits))[1] == 2
    bits[2:4, 0:2, 0:2] = True  # face-touching
    assert label_components(BinaryMask(bits))[1] == 2
    corner = np.zeros((4, 4, 4), bool)
    corner[0, 0, 0] = corner[1, 1, 1] = True
    assert label_components(BinaryMask(corner))[1] == 2
    assert label_components(BinaryMask(corner), connectivity=26)[1] == 1


def test_label_order_by_first_linear_voxel():
    bits = np.zeros((4, 4, 4), bool)
    bits[3, 0, 0] = True  # linear index 3
    bits[0, 1, 0] = True  # linear index 4 (x-fastest)
    bits[0, 0, 3] = True  # linear index 48
    labels, n = label_components(BinaryMask(bits))
    assert n == 3
    assert labels[3, 0, 0] == 1 and labels[0, 1, 0] == 2 and labels[0, 0, 3] == 3


def test_label_components_random_matches_flood_fill(rng):
    for density in (0.2, 0.35, 0.5):
        bits = rng.random((8, 8, 8)) < density
        labels, n = label_components(BinaryMask(bits))
        assert partition(labels, n) == flood_fill_oracle(bits)


def test_detection_rate_examples():
    gt = np.zeros((20, 10, 10), bool)
    gt[1:4, 1:4, 1:4] = True  # 27 voxels
    gt[10:15, 1:5, 1:6] = True  # 100 voxels
    rate, recs = detection_rate(BinaryMask(gt), BinaryMask(gt))
    assert rate == 1.0 and all(r.detected for r in recs)
    rate, _ = detection_rate(BinaryMask(np.zeros_like(gt)), BinaryMask(gt))
    assert rate == 0.0
    pred = np.zeros_like(gt)
    pred[10:13, 1:5, 1:6] = True  # 60 % of lesion 2
    pred[1:4, 1:4, 1:2] = True
    pred[1, 1, 2] = True  # 10/27 of lesion 1
    rate, recs = detection_rate(BinaryMask(pred), BinaryMask(gt), 0.5)
    assert rate == 0.5
    assert [(r.gt_voxels, r.overlap_voxels, r.detected) for r in recs] == [(27, 10, False), (100, 60, True)]
    assert detection_rate(BinaryMask(pred), BinaryMask(np.zeros_like(gt)))[0] == 1.0


def test_detection_rate_monotone_in_overlap(rng):
    gt = BinaryMask(rng.random((10, 10, 10)) < 0.15)
    pred = BinaryMask(rng.random((10, 10, 10)) < 0.5)
    rates = [detection_rate(pred, gt, t)[0] for t in (0.9, 0.7, 0.5, 0.3, 0.1)]
    assert rates == sorted(rates)


def test_evaluate_and_csv(tmp_path):
    gt = np.zeros((6, 6, 6), bool)
    gt[1:3, 1:3, 1:3] = True
    region = np.ones_like(gt)
    rep = evaluate(BinaryMask(gt), BinaryMask(gt), BinaryMask(region))
    assert rep.dice == 1.0 and rep.detection_rate == 1.0
    write_report_csv(tmp_path / "r.csv", {"a": rep, "b": MetricsReport(0.5, 0.5, 1.0, 0.5, 0.0)})
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "volume_id,dice,sensitivity,specificity,precision,detection_rate"
    assert lines[1].startswith("a,1.0,")
    assert lines[-1].startswith("mean±std,0.75 ± 0.25,")
    write_lesion_csv(tmp_path / "l.csv", {"a": rep})
    assert (tmp_path / "l.csv").read_text().splitlines() == [
        "volume_id,lesion_id,gt_voxels,overlap_voxels,detected", "a,1,8,8,1"]


def test_summarize():
    s = summarize([MetricsReport(1, 1, 1, 1, 1), MetricsReport(0, 0, 1, 0, 0)])
    assert s["dice"] == (0.5, 0.5)
    assert s["specificity"] == (1.0, 0.0)
