"""Run every config in configs/ and print each headline.

Usage: python scripts/run_all.py [--out results]
Outputs land in <out>/<config stem>/. Exit status is nonzero if any run failed.
"""
import argparse
import json
from pathlib import Path

from relustab.cli import run_experiment
from relustab.config import parse_config

ROOT = Path(__file__).parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=ROOT / "results", type=Path)
    args = ap.parse_args()
    worst = 0
    for path in sorted((ROOT / "configs").glob("*.ini")):
        print(f"== {path.stem}")
        cfg = parse_config(path.read_text(encoding="utf-8"))
        code = run_experiment(cfg, args.out / path.stem)
        worst = max(worst, code)
        summary = json.loads((args.out / path.stem / "summary.json").read_text())
        for key, val in summary["headline"].items():
            print(f"   {key}: {val}")
    raise SystemExit(worst)


if __name__ == "__main__":
    main()
