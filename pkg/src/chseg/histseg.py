"""Histogram-mode separation and soft/hard lesion masks.

The evolved field is binned inside the liver into 255 equal bins over
[0, 1]. Interior bins with a negative discrete second difference are peaks.
The tallest peak is taken as the liver mode; walking down through lower
intensity peaks, the first one below ``peak_ratio`` times the liver
intensity gives the separation intensity ``I0``. A logistic profile centred
on ``I0`` turns intensities into lesion probabilities, which are cut at
``hard_threshold``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, InputError
from .volume import BinaryMask, ScalarVolume, check_aligned

N_BINS = 255
PEAK_RATIO = 0.75
HARD_THRESHOLD = 0.15


def default_eps_soft(epsilon_voxels: float = 6.0) -> float:
    """Interface width in intensity units: voxel width over 255 grey levels."""
    return epsilon_voxels / N_BINS


@dataclass
class IntensityHistogram:
    counts: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) / len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class PeakSet:
    indices: np.ndarray
    intensities: np.ndarray
    heights: np.ndarray

    def __len__(self):
        return len(self.indices)

    @classmethod
    def from_values(cls, intensities, heights) -> "PeakSet":
        """Build a peak set directly from intensities and heights, sorted by intensity."""
        intensities = np.asarray(intensities, dtype=np.float64)
        heights = np.asarray(heights, dtype=np.float64)
        order = np.argsort(intensities, kind="stable")
        indices = np.floor(intensities[order] * N_BINS).astype(np.int64)
        return cls(indices, intensities[order], heights[order])


@dataclass
class SegmentationResult:
    threshold_I0: float
    soft: ScalarVolume
    hard: BinaryMask
    eps_soft: float
    peaks: PeakSet
    histogram: IntensityHistogram


def bin_index(values) -> np.ndarray:
    """Bin ``i`` covers ``[i/255, (i+1)/255)``; the last bin also takes 1.0."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.minimum((v * N_BINS).astype(np.int64), N_BINS - 1)


def histogram(psi: ScalarVolume, chi: BinaryMask) -> IntensityHistogram:
    check_aligned(psi, chi)
    values = psi.data[chi.bits]
    if values.size == 0:
        raise EmptyMaskError("histogram over an empty mask")
    return IntensityHistogram(np.bincount(bin_index(values), minlength=N_BINS))


def detect_peaks(h: IntensityHistogram) -> PeakSet:
    c = np.asarray(h.counts, dtype=np.int64)
    second = c[2:] - 2 * c[1:-1] + c[:-2]
    idx = np.flatnonzero(second < 0) + 1
    return PeakSet(idx, h.bin_centers[idx], c[idx])


def separate_modes(peaks: PeakSet, peak_ratio: float = PEAK_RATIO) -> float:
    """Separation intensity between the lesion and liver modes.

    Returns 0.0 when no peak lies below ``peak_ratio`` times the liver
    peak intensity, which yields an empty lesion mask downstream.
    """
    if len(peaks) == 0:
        return 0.0
    I = np.asarray(peaks.intensities, dtype=np.float64)
    H = np.asarray(peaks.heights, dtype=np.float64)
    # tallest peak; equal heights resolve to the brighter one
    j = max(range(len(I)), key=lambda n: (H[n], I[n]))
    k = j - 1
    while k >= 0 and I[k] > peak_ratio * I[j]:
        k -= 1
    return float(I[k]) if k >= 0 else 0.0


def soft_segment(psi: ScalarVolume, chi: BinaryMask, I0: float, eps_soft: float) -> ScalarVolume:
    """Lesion probability ``0.5 (1 + tanh((I0 - I) / (2 sqrt(2) eps_soft)))`` inside ``chi``."""
    if not eps_soft > 0:
        raise InputError("eps_soft must be positive")
    check_aligned(psi, chi)
    intensity = psi.data.astype(np.float64)
    prob = 0.5 * (1.0 + np.tanh((I0 - intensity) / (2.0 * math.sqrt(2.0) * eps_soft)))
    return psi.with_data(np.where(chi.bits, prob, 0.0), "normalized_unit")


def hard_segment(soft: ScalarVolume, chi: BinaryMask, threshold: float = HARD_THRESHOLD) -> BinaryMask:
    check_aligned(soft, chi)
    return BinaryMask((soft.data >= np.float32(threshold)) & chi.bits)


def segment(psi: ScalarVolume, chi: BinaryMask, eps_soft: float | None = None,
            peak_ratio: float = PEAK_RATIO, hard_threshold: float = HARD_THRESHOLD) -> SegmentationResult:
    """Histogram, peaks, separation and both masks in one call."""
    eps_soft = default_eps_soft() if eps_soft is None else eps_soft
    h = histogram(psi, chi)
    peaks = detect_peaks(h)
    I0 = separate_modes(peaks, peak_ratio)
    soft = soft_segment(psi, chi, I0, eps_soft)
    hard = hard_segment(soft, chi, hard_threshold)
    return SegmentationResult(I0, soft, hard, eps_soft, peaks, h)


def write_histogram_csv(path, before: IntensityHistogram, after: IntensityHistogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "center", "count_before", "count_after"])
        for i, (c, b, a) in enumerate(zip(after.bin_centers, before.counts, after.counts)):
            w.writerow([i, f"{c:.6f}", int(b), int(a)])


def peaks_json(result: SegmentationResult) -> dict:
    p = result.peaks
    return {
        "peaks": [
            {"bin": int(i), "intensity": float(v), "height": int(h)}
            for i, v, h in zip(p.indices, p.intensities, p.heights)
        ],
        "I0": result.threshold_I0,
        "eps_soft": result.eps_soft,
    }
