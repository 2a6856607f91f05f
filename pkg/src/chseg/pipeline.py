"""End-to-end segmentation: preprocess, evolve, separate, threshold."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chsolver, histseg, metrics, preprocess
from .config import PipelineConfig
from .volume import BinaryMask, ScalarVolume, _box_slices, check_aligned, write_rvol, write_slice_pgm

log = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    psi0: ScalarVolume
    psi: ScalarVolume
    chi: BinaryMask
    report: preprocess.PreprocessReport
    trace: chsolver.SolverTrace
    segmentation: histseg.SegmentationResult
    soft_full: ScalarVolume
    hard_full: BinaryMask
    histogram_before: histseg.IntensityHistogram


def _embed(data: np.ndarray, box, dims, fill=0):
    full = np.full(dims, fill, dtype=data.dtype)
    full[_box_slices(box)] = data
    return full


def run_segmentation(vol: ScalarVolume, mask: BinaryMask, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    cfg.validate()
    check_aligned(vol, mask)
    psi0, chi, report = preprocess.make_initial_pff(vol, mask, cfg.preprocess)
    log.info("preprocess: a=%.4g b=%.4g crop=%s", report.interval_a, report.interval_b, report.crop_box)
    psi, trace = chsolver.evolve(psi0, cfg.solver)
    seg = histseg.segment(psi, chi, cfg.eps_soft(), cfg.histseg.peak_ratio, cfg.histseg.hard_threshold)
    log.info("separation I0=%.4f from %d peaks (eps_soft=%.5f)", seg.threshold_I0, len(seg.peaks), seg.eps_soft)
    soft_full = vol.with_data(_embed(seg.soft.data, report.crop_box, vol.dims, 0.0), "normalized_unit")
    hard_full = BinaryMask(_embed(seg.hard.bits, report.crop_box, vol.dims, False))
    return PipelineResult(psi0, psi, chi, report, trace, seg, soft_full, hard_full,
                          histseg.histogram(psi0, chi))


def write_outputs(result: PipelineResult, cfg: PipelineConfig, out_dir, gt: BinaryMask | None = None,
                  volume_id: str = "volume") -> dict:
    """Write every pipeline artefact to ``out_dir`` and return the report document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rvol(result.soft_full, out / "soft.rvol.json")
    write_rvol(result.hard_full.to_volume(result.soft_full.spacing), out / "hard.rvol.json")
    write_rvol(result.psi0, out / "psi0.rvol.json")
    write_rvol(result.psi, out / "psi.rvol.json")
    result.trace.write_csv(out / "trace.csv")
    histseg.write_histogram_csv(out / "histogram.csv", result.histogram_before, result.segmentation.histogram)

    doc = {
        "volume_id": volume_id,
        "preprocess": result.report.to_json(),
        "segmentation": histseg.peaks_json(result.segmentation),
        "solver": {
            "steps_run": result.trace.step_index[-1],
            "stopped_early": result.trace.stopped_early,
            "elapsed_s": result.trace.elapsed_s,
        },
        "config": cfg.materialized(),
    }
    if gt is not None:
        rep = metrics.evaluate(result.hard_full, gt, BinaryMask(_embed(result.chi.bits, result.report.crop_box,
                                                                        result.hard_full.dims, False)),
                               cfg.metrics.min_overlap, cfg.metrics.connectivity)
        doc["metrics"] = rep.row()
        metrics.write_report_csv(out / "metrics.csv", {volume_id: rep}, with_summary=False)
        metrics.write_lesion_csv(out / "lesions.csv", {volume_id: rep})

    if cfg.io.slices:
        z = result.psi.dims[2] // 2
        write_slice_pgm(result.psi0, "z", z, out / "slice_initial.pgm")
        write_slice_pgm(result.psi, "z", z, out / "slice_separated.pgm")
        write_slice_pgm(result.segmentation.soft, "z", z, out / "slice_soft.pgm")
        write_slice_pgm(result.segmentation.hard.to_volume(), "z", z, out / "slice_hard.pgm")

    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    return doc
