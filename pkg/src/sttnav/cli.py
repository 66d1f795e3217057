"""Command-line entry point: run / bench / validate / replay / serve.

Exit codes: 0 success, 1 task failure (episode ended non-Success), 2
configuration or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import bench as bench_mod
from .env import validate
from .metrics import compute_metrics
from .recording import jsonl_to_csv, read_jsonl, write_jsonl, write_metrics_csv
from .scenario import ScenarioError, bundled_scenarios, load_scenario
from .sim import SUCCESS, run_episode

log = logging.getLogger("sttnav.cli")

EXIT_OK = 0
EXIT_TASK_FAILURE = 1
EXIT_CONFIG = 2


def _setup_logging() -> None:
    level = os.environ.get("STT_LOG_LEVEL", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        print(f"warning: unknown STT_LOG_LEVEL {level!r}, using info", file=sys.stderr)
        level = "info"
    logging.basicConfig(level=levels[level],
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sttnav",
        description="Real-time safe-tube navigation: episodes, benchmarks, live sessions.")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run one episode and write its logs")
    run.add_argument("--scenario", required=True,
                     help=f"path or bundled name {bundled_scenarios()}")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--dt", type=float, help="override the scenario dt")
    run.add_argument("--disturbance", type=float, help="override the disturbance bound")
    run.add_argument("--out", help="replay JSONL path")
    run.add_argument("--out-csv", help="metrics summary CSV path")
    run.add_argument("--force", action="store_true",
                     help="run even if validation fails")

    val = sub.add_parser("validate", help="check a scenario without running it")
    val.add_argument("--scenario", required=True)

    bn = sub.add_parser("bench", help="run a randomized benchmark")
    bn.add_argument("--spec", required=True, help="bench spec JSON path")
    bn.add_argument("--workers", type=int, default=1)
    bn.add_argument("--out", help="report JSON path")

    rp = sub.add_parser("replay", help="convert a replay JSONL into plot-ready CSV")
    rp.add_argument("--log", required=True, help="replay JSONL path")
    rp.add_argument("--out-csv", required=True)

    sv = sub.add_parser("serve", help="host a live operator session")
    sv.add_argument("--scenario", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8700)
    sv.add_argument("--time-scale", type=float, default=1.0,
                    help="sim seconds per wall second (<=0: unpaced)")
    return p


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.disturbance is not None:
        overrides["disturbance"] = {"bound": args.disturbance}
    log_ = run_episode(sc, overrides=overrides or None, force=args.force)
    metrics = compute_metrics(log_)
    if args.out:
        with open(args.out, "w") as fh:
            write_jsonl(log_, fh)
        log.info("replay log written to %s", args.out)
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            write_metrics_csv(metrics, fh)
    print(f"status: {log_.status}")
    print(f"min_clearance: {metrics.min_clearance:.4f} m, path: {metrics.path_length:.3f} m, "
          f"smoothness: {metrics.smoothness:.4f}")
    print(f"tube+controller: {metrics.compute_time_mean_ms:.4f} ms/tick, "
          f"total {metrics.total_stt_time_s:.3f} s")
    return EXIT_OK if log_.status == SUCCESS else EXIT_TASK_FAILURE


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    report = validate(sc.task, sc.build_field(), sc.tube)
    for code, msg in report.notes:
        print(f"note [{code}]: {msg}")
    if report.ok:
        print("ok")
        return EXIT_OK
    for code, msg in report.violations:
        print(f"violation [{code}]: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def _cmd_bench(args) -> int:
    specs = bench_mod.load_bench_spec(args.spec)
    total_jobs = sum(s.trials * len(s.disturbance_bounds) for _, s in specs)
    log.info("running %d trials across %d group(s), %d worker(s)",
             total_jobs, len(specs), args.workers)
    report = bench_mod.run_bench(specs, workers=args.workers)
    print(bench_mod.format_report(report))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        log.info("report written to %s", args.out)
    return EXIT_OK


def _cmd_replay(args) -> int:
    with open(args.log) as fh:
        _header, rows, _footer = read_jsonl(fh)
    with open(args.out_csv, "w") as fh:
        jsonl_to_csv(rows, fh)
    print(f"{len(rows)} rows -> {args.out_csv}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    sc = load_scenario(args.scenario)
    app = create_app(sc, time_scale=args.time_scale)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, 0 on --help; pass both through
        return int(exc.code or 0)
    try:
        handler = {"run": _cmd_run, "validate": _cmd_validate, "bench": _cmd_bench,
                   "replay": _cmd_replay, "serve": _cmd_serve}[args.verb]
        return handler(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
