"""Command-line entry point.

    fltg run CONFIG --out DIR
    fltg sweep CONFIG --axis NAME --values V1,V2,... --out DIR

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
Configuration (including the sweep grid) is validated before anything is
written to the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__, vecmath
from .config import SWEEP_AXES, ExperimentConfig, parse_config, parse_config_dict
from .errors import ConfigError, FLTGError, SamplingExhaustedError
from .simulator import RoundMetrics, SimState, build_state, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

METRICS_COLUMNS = ("round", "test_accuracy", "backdoor_success", "skipped", "num_filtered")
SUMMARY_COLUMNS = ("value", "final_accuracy", "final_backdoor_success")

log = logging.getLogger("fltg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for runtime errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt_float(x: float | None) -> str:
    """17 significant digits, enough to round-trip any double."""
    return "" if x is None else format(float(x), ".17g")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def metrics_row(m: RoundMetrics) -> list[str]:
    return [
        str(m.round),
        fmt_float(m.test_accuracy),
        fmt_float(m.backdoor_success),
        "1" if m.aggregate_skipped else "0",
        str(len(m.filtered_ids)),
    ]


def scores_record(m: RoundMetrics) -> str:
    rec = {
        "round": m.round,
        "scores": {str(cid): float(s) for cid, s in sorted(m.per_client_scores.items())},
        "filtered": sorted(m.filtered_ids),
        "reference": m.reference,
        "skipped": m.aggregate_skipped,
        "skip_reason": m.skip_reason,
    }
    return json.dumps(rec, sort_keys=True)


def execute_run(cfg: ExperimentConfig, out_dir: Path, state: SimState | None = None) -> list[RoundMetrics]:
    """Run one experiment, streaming metrics.csv and scores.jsonl, then write manifest.json.

    The simulation state (data generation, root sampling, partitioning) is
    built before ``out_dir`` is touched, so data-stage errors leave no output.
    """
    state = build_state(cfg) if state is None else state
    started = _now()
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    scores_path = out_dir / "scores.jsonl"
    with open(metrics_path, "w", newline="") as mf, open(scores_path, "w") as sf:
        writer = csv.writer(mf, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)

        def on_round(m: RoundMetrics) -> None:
            writer.writerow(metrics_row(m))
            sf.write(scores_record(m) + "\n")
            log.info("round %d: accuracy %.4f", m.round, m.test_accuracy)

        history = run_experiment(cfg, on_round, state=state)
    manifest = {
        "artifact_version": __version__,
        "config_echo": cfg.to_dict(),
        "started": started,
        "finished": _now(),
        "kernel_backend": vecmath.BACKEND,
        "outputs": {"metrics": str(metrics_path), "scores": str(scores_path)},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return history


def cmd_run(config_path, out_dir) -> int:
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return _guarded(lambda: execute_run(cfg, Path(out_dir)))


def parse_values(text: str) -> list[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise UsageError("--values needs at least one number")
    try:
        return [float(s) for s in items]
    except ValueError:
        raise UsageError(f"--values must be a comma-separated list of numbers, got {text!r}") from None


def sweep_configs(cfg: ExperimentConfig, axis: str, values: Sequence[float]) -> list[ExperimentConfig]:
    """One validated config per value; raises ConfigError before any run starts."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}", "axis")
    return [parse_config_dict(cfg.with_axis(axis, v).to_dict()) for v in values]


def cmd_sweep(config_path, axis: str, values: str | Sequence[float], out_dir) -> int:
    try:
        vals = parse_values(values) if isinstance(values, str) else [float(v) for v in values]
        if not vals:
            raise UsageError("sweep needs at least one value")
        cfgs = sweep_configs(parse_config(config_path), axis, vals)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    def work():
        out = Path(out_dir)
        # build every state up front so an infeasible grid point fails before any output
        states = [build_state(cfg) for cfg in cfgs]
        rows = []
        for v, cfg, state in zip(vals, cfgs, states):
            last = execute_run(cfg, out / f"{axis}={v!r}", state)[-1]
            rows.append([fmt_float(v), fmt_float(last.test_accuracy), fmt_float(last.backdoor_success)])
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            writer.writerows(rows)

    return _guarded(work)


def _guarded(fn) -> int:
    try:
        fn()
    except (ConfigError, SamplingExhaustedError) as exc:
        # the data cannot satisfy the configuration (e.g. root size vs class counts)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FLTGError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fltg", description="Byzantine-robust federated learning simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round progress")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config", help="JSON configuration file")
    run.add_argument("--out", required=True, help="output directory")

    sw = sub.add_parser("sweep", help="run one experiment per value along an axis")
    sw.add_argument("config", help="JSON configuration file")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma-separated values, e.g. 0.1,0.5,1.0")
    sw.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "run":
        return cmd_run(args.config, args.out)
    return cmd_sweep(args.config, args.axis, args.values, args.out)


if __name__ == "__main__":
    sys.exit(main())
