"""Turn a raw CT volume and liver mask into the initial phase field.

The recipe: crop to the padded bounding box of the liver, clip to the
Hounsfield window, find the central quantile interval ``[a, b]`` of the
liver samples, clip again to ``[0, b]``, divide by ``b`` and fill every
voxel outside the liver with a liver-like background value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateIntensityError, EmptyMaskError, InputError
from .volume import BinaryMask, Box, ScalarVolume, bounding_box, check_aligned


@dataclass
class PreprocessConfig:
    hu_low: float = 0.0
    hu_high: float = 200.0
    credibility: float = 0.95
    background_value: float = 0.55
    crop_pad: int = 8

    def validate(self) -> None:
        if not 0 < self.credibility < 1:
            raise InputError("credibility must lie in (0, 1)")
        if not self.hu_low < self.hu_high:
            raise InputError("hu_low must be below hu_high")
        if not 0 < self.background_value < 1:
            raise InputError("background_value must lie in (0, 1)")
        if self.crop_pad < 0:
            raise InputError("crop_pad must be non-negative")


@dataclass
class PreprocessReport:
    interval_a: float
    interval_b: float
    crop_box: Box
    normalization_divisor: float

    def to_json(self) -> dict:
        return {
            "a": self.interval_a,
            "b": self.interval_b,
            "crop_box": [list(r) for r in self.crop_box],
            "divisor": self.normalization_divisor,
        }


def clip(vol: ScalarVolume, lo: float, hi: float) -> ScalarVolume:
    if not lo < hi:
        raise InputError(f"clip bounds must satisfy lo < hi, got [{lo}, {hi}]")
    return vol.with_data(np.clip(vol.data, np.float32(lo), np.float32(hi)))


def nearest_rank(sorted_values: np.ndarray, q: float):
    """Nearest-rank quantile: element ``ceil(q * n)`` (1-based) of a sorted array."""
    n = sorted_values.size
    # guard against q*n landing a hair above an integer through rounding
    rank = math.ceil(round(q * n, 9))
    return sorted_values[min(max(rank, 1), n) - 1]


def credibility_interval(vol: ScalarVolume, mask: BinaryMask, mass: float = 0.95):
    """Central interval holding ``mass`` of the masked samples, as ``(a, b)``."""
    if not 0 < mass < 1:
        raise InputError("mass must lie in (0, 1)")
    check_aligned(vol, mask)
    values = np.sort(vol.data[mask.bits])
    if values.size == 0:
        raise EmptyMaskError("credibility interval over an empty mask")
    tail = (1.0 - mass) / 2.0
    return float(nearest_rank(values, tail)), float(nearest_rank(values, 1.0 - tail))


def make_initial_pff(vol: ScalarVolume, mask: BinaryMask, cfg: PreprocessConfig | None = None):
    """Build the initial phase field on the cropped domain.

    Returns:
        ``(psi0, chi, report)`` where ``psi0`` is a ``phase_field`` volume and
        ``chi`` the liver mask, both cropped to ``report.crop_box``.

    Raises:
        EmptyMaskError: the liver mask has no voxels.
        DegenerateIntensityError: the upper interval bound ``b`` is not positive.
    """
    cfg = cfg or PreprocessConfig()
    cfg.validate()
    check_aligned(vol, mask)
    box = bounding_box(mask, cfg.crop_pad)
    chi = mask.crop(box)
    clipped = clip(vol.crop(box), cfg.hu_low, cfg.hu_high)

    a, b = credibility_interval(clipped, chi, cfg.credibility)
    if b <= 0:
        raise DegenerateIntensityError(f"upper intensity bound b={b} HU is not positive")

    unit = np.clip(clipped.data.astype(np.float64), 0.0, b) / b
    psi0 = np.where(chi.bits, unit, cfg.background_value)
    report = PreprocessReport(a, b, box, b)
    out = ScalarVolume(psi0, vol.spacing, "phase_field", {**vol.meta, "preprocess": asdict(cfg)})
    return out, chi, report
