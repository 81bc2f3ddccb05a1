"""Command line entry point: ``relustab run|validate --config FILE``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ._io import render_json, write_atomic
from .config import FORMATS, ExperimentConfig, parse_config
from .errors import ConfigError
from .experiments import RUNNERS, Outcome


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, fmt: str | None = None) -> int:
    """Run one experiment and write its artifacts plus ``summary.json``.

    Returns 0 iff every check passed, 1 if a check failed or the experiment
    raised (the error lands in ``summary.json``), 2 if nothing could be written.
    """
    fmt = fmt or cfg.fmt
    out_dir = Path(out_dir or cfg.out or "results")
    error = None
    try:
        outcome = RUNNERS[cfg.kind](cfg)
    except Exception as exc:  # serialised into the summary, exit status reflects it
        outcome = Outcome()
        error = {"type": type(exc).__name__, "message": str(exc)}
    passed = error is None and outcome.passed
    summary = {
        "config": cfg.to_json(),
        "pass": passed,
        "checks": outcome.checks,
        "headline": outcome.headline,
        "error": error,
    }
    files = {}
    if fmt in ("csv", "both"):
        files.update(outcome.csv)
    if fmt in ("json", "both"):
        files.update(outcome.json)
    files["summary.json"] = render_json(summary)
    try:
        write_atomic(out_dir, files)
    except OSError as exc:
        print(f"cannot write outputs to {out_dir}: {exc}", file=sys.stderr)
        return 2
    for name, ok in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if error:
        print(f"ERROR {error['type']}: {error['message']}", file=sys.stderr)
    return 0 if passed else 1


def _load(path: str) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="relustab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--format", choices=FORMATS, default=None)
    val = sub.add_parser("validate", help="validate a config without running it")
    val.add_argument("--config", required=True)
    args = ap.parse_args(argv)

    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"ok: {cfg.kind}")
        return 0
    return run_experiment(cfg, args.out, args.format)


if __name__ == "__main__":
    sys.exit(main())
