"""Command line entry point.

Subcommands: ``segment``, ``solve``, ``phantom``, ``metrics``, ``histogram``.
Settings come from defaults, then ``--config FILE``, then dotted overrides
such as ``--solver.steps=300``. Exit codes: 0 success, 2 input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import chsolver, histseg, metrics, phantom
from .config import load_config
from .errors import InputError, NonFiniteStateError
from .pipeline import run_segmentation, write_outputs
from .volume import BinaryMask, check_aligned, read_volume, write_rvol

log = logging.getLogger("chseg")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for the solver")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="chseg", description=__doc__.splitlines()[0],
                                epilog="Any config key can be overridden with --section.key=value.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("segment", parents=[common], help="full segmentation pipeline")
    s.add_argument("volume")
    s.add_argument("mask", help="liver mask")
    s.add_argument("--gt", help="ground-truth lesion mask to evaluate against")
    s.add_argument("--slices", action="store_true", help="write mid-axial PGM slices")

    s = sub.add_parser("solve", parents=[common], help="evolve a phase-field volume only")
    s.add_argument("volume")

    s = sub.add_parser("phantom", parents=[common], help="generate a synthetic phantom")
    s.add_argument("spec", nargs="?", help="PhantomSpec JSON (default: reference phantom)")
    s.add_argument("--seed", type=int, help="override rng_seed of the phantom description")

    s = sub.add_parser("metrics", parents=[common], help="score a predicted mask")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("region", nargs="?", help="evaluation region, e.g. the liver mask")
    s.add_argument("--id", dest="volume_id")

    s = sub.add_parser("histogram", parents=[common], help="histogram, peaks and I0 of a field")
    s.add_argument("volume")
    s.add_argument("mask")
    s.add_argument("--before", help="field before separation, for the count_before column")
    return p


def _split_overrides(extra: list[str]) -> dict:
    overrides = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            raise InputError(f"unrecognized argument {tok!r}")
        key, sep, value = tok[2:].partition("=")
        if not sep:
            try:
                value = next(it)
            except StopIteration:
                raise InputError(f"override {tok} needs a value") from None
        overrides[key] = value
    return overrides


def _set_threads(n):
    if n is None:
        return
    import numba

    if n < 1:
        raise InputError("--threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.io.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_segment(args, cfg) -> int:
    cfg.io.volume, cfg.io.mask = args.volume, args.mask
    if args.gt:
        cfg.io.gt = args.gt
    if args.slices:
        cfg.io.slices = True
    out = _out_dir(args, cfg)
    vol = read_volume(cfg.io.volume)
    mask = read_volume(cfg.io.mask, as_mask=True)
    gt = read_volume(cfg.io.gt, as_mask=True) if cfg.io.gt else None
    if gt is not None:
        check_aligned(vol, gt)
    result = run_segmentation(vol, mask, cfg)
    doc = write_outputs(result, cfg, out, gt, Path(args.volume).name.split(".")[0])
    if "metrics" in doc:
        log.info("metrics: %s", json.dumps(doc["metrics"]))
    return EXIT_OK


def cmd_solve(args, cfg) -> int:
    out = _out_dir(args, cfg)
    vol = read_volume(args.volume)
    if vol.domain != "phase_field":
        vol = vol.with_data(vol.data, "phase_field")
    psi, trace = chsolver.evolve(vol, cfg.solver)
    write_rvol(psi, out / "psi.rvol.json")
    trace.write_csv(out / "trace.csv")
    (out / "config.json").write_text(json.dumps(cfg.materialized(), indent=2) + "\n")
    return EXIT_OK


def cmd_phantom(args, cfg) -> int:
    out = _out_dir(args, cfg)
    spec = phantom.PhantomSpec.load(args.spec) if args.spec else phantom.reference_spec()
    if args.seed is not None:
        spec.rng_seed = args.seed
    vol, liver, lesions = phantom.generate(spec)
    write_rvol(vol, out / "volume.rvol.json")
    write_rvol(liver, out / "liver.rvol.json")
    write_rvol(lesions, out / "lesions.rvol.json")
    spec.save(out / "phantom_spec.json")
    return EXIT_OK


def cmd_metrics(args, cfg) -> int:
    pred = read_volume(args.pred, as_mask=True)
    gt = read_volume(args.gt, as_mask=True)
    region = read_volume(args.region, as_mask=True) if args.region else None
    check_aligned(pred, gt)
    rep = metrics.evaluate(pred, gt, region, cfg.metrics.min_overlap, cfg.metrics.connectivity)
    vid = args.volume_id or Path(args.pred).name.split(".")[0]
    row = rep.row()
    print("volume_id," + ",".join(metrics.SCORE_FIELDS))
    print(vid + "," + ",".join(repr(float(row[k])) for k in metrics.SCORE_FIELDS))
    if args.out:
        out = _out_dir(args, cfg)
        metrics.write_report_csv(out / "metrics.csv", {vid: rep}, with_summary=False)
        metrics.write_lesion_csv(out / "lesions.csv", {vid: rep})
    return EXIT_OK


def cmd_histogram(args, cfg) -> int:
    out = _out_dir(args, cfg)
    psi = read_volume(args.volume)
    chi = read_volume(args.mask, as_mask=True)
    result = histseg.segment(psi, chi, cfg.eps_soft(), cfg.histseg.peak_ratio, cfg.histseg.hard_threshold)
    before = histseg.histogram(read_volume(args.before), chi) if args.before else result.histogram
    histseg.write_histogram_csv(out / "histogram.csv", before, result.histogram)
    doc = histseg.peaks_json(result)
    (out / "peaks.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps({"I0": doc["I0"], "eps_soft": doc["eps_soft"], "n_peaks": len(doc["peaks"])}))
    return EXIT_OK


COMMANDS = {
    "segment": cmd_segment,
    "solve": cmd_solve,
    "phantom": cmd_phantom,
    "metrics": cmd_metrics,
    "histogram": cmd_histogram,
}


def main(argv=None) -> int:
    args, extra = _parser().parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, _split_overrides(extra))
        _set_threads(args.threads)
        return COMMANDS[args.command](args, cfg)
    except NonFiniteStateError as exc:
        print(f"chseg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        print(f"chseg: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
