"""``du-doa`` command line: run, sim, score, plot, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PRESETS, PipelineConfig, load_config, merge, preset_config
from .errors import DuDoaError
from .evaluation import Scoring, block_errors, write_errors_csv
from .pipeline import benchmark, read_estimates_csv, run_pipeline, score_rows
from .scene import load_scene_spec, read_truth_csv, synthesize, write_truth_csv
from .spectral import write_wav

log = logging.getLogger("du_doa")


def _build_config(args) -> PipelineConfig:
    if args.config:
        cfg = load_config(args.config, default_preset=args.preset)
    else:
        cfg = preset_config(args.preset or "linear")
    overrides: dict = {}
    if args.geometry:
        overrides["geometry"] = args.geometry
    if args.vad_threshold is not None:
        overrides["vad_threshold"] = args.vad_threshold
    if args.channels:
        overrides["channels"] = [int(c) for c in args.channels.split(",")]
    if args.dtype:
        overrides["compute_dtype"] = args.dtype
    return merge(cfg, overrides)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--preset", choices=sorted(PRESETS), help="array preset (default: linear)")
    p.add_argument("--geometry", help="geometry JSON path or bundled name")
    p.add_argument("--vad-threshold", type=float, help="VAD threshold on summed CPSD traces")
    p.add_argument("--channels", help="comma-separated 0-based WAV channels to keep")
    p.add_argument("--dtype", choices=["float64", "float32"], help="grid-search precision")


def cmd_run(args) -> int:
    cfg = _build_config(args)
    io = {"input": args.input, "output": args.out}
    for key in ("truth", "dump_srp", "errors_out", "plots_dir"):
        val = getattr(args, key)
        if val:
            io[key] = val
    if args.score_all:
        io["score_all"] = True
    if args.truth_convention:
        io["truth_elevation_convention"] = args.truth_convention
    cfg = merge(cfg, {"io": io})
    result = run_pipeline(cfg)
    if result.report is not None:
        payload = {"smoothed": result.report.to_dict(), "raw": result.raw_report.to_dict()}
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(json.dumps({"blocks": len(result.rows)}, sort_keys=True))
    return 0


def cmd_sim(args) -> int:
    spec = load_scene_spec(args.spec)
    buffer, trajectory = synthesize(spec)
    write_wav(args.out, buffer)
    if args.truth:
        write_truth_csv(args.truth, trajectory)
    return 0


def cmd_score(args) -> int:
    rows = read_estimates_csv(args.estimates)
    truth = read_truth_csv(args.truth, elevation_convention=args.truth_convention or "elevation")
    with_el = not args.azimuth_only
    scoring = Scoring.ALL_EMITTED if args.score_all else Scoring.ACTIVE_ONLY
    report = score_rows(rows, truth, scoring, with_el)
    if args.errors_out:
        errs, _ = block_errors([r.smoothed_estimate() for r in rows], truth, scoring, with_elevation=with_el)
        write_errors_csv(args.errors_out, errs)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from .plots import emit_plots

    rows = read_estimates_csv(args.estimates)
    truth = read_truth_csv(args.truth) if args.truth else None
    for p in emit_plots(rows, truth, args.out_dir, with_elevation=not args.azimuth_only):
        print(p)
    return 0


def cmd_bench(args) -> int:
    cfg = _build_config(args)
    result = benchmark(cfg, seconds=args.seconds, seed=args.seed, workers=args.threads)
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.require_realtime and result["realtime_factor"] < 1.0:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="du-doa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="localize and track a multichannel WAV")
    _add_config_args(p)
    p.add_argument("--input", required=True, help="multichannel WAV")
    p.add_argument("--out", help="estimate CSV to write")
    p.add_argument("--truth", help="ground truth CSV (time_s,azimuth_deg,elevation_deg)")
    p.add_argument("--truth-convention", choices=["elevation", "inclination"])
    p.add_argument("--dump-srp", help="write per-block SRP maps as CSV")
    p.add_argument("--errors-out", help="write per-block errors as CSV")
    p.add_argument("--plots-dir", help="write SVG trajectory plots here")
    p.add_argument("--score-all", action="store_true", help="score every emitted block, not only VAD-active ones")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sim", help="synthesize a far-field scene")
    p.add_argument("--spec", required=True, help="scene JSON")
    p.add_argument("--out", required=True, help="WAV to write")
    p.add_argument("--truth", help="truth CSV to write")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("score", help="RMSE of an estimate CSV against truth")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--truth-convention", choices=["elevation", "inclination"])
    p.add_argument("--azimuth-only", action="store_true")
    p.add_argument("--score-all", action="store_true")
    p.add_argument("--errors-out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("plot", help="SVG plots from an estimate CSV")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--azimuth-only", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bench", help="measure pipeline throughput on a synthetic scene")
    _add_config_args(p)
    p.add_argument("--seconds", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, help="grid-search workers (default: DU_DOA_THREADS or CPU count)")
    p.add_argument("--require-realtime", action="store_true", help="exit 1 if slower than real time")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DuDoaError as exc:
        print(f"du-doa: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
