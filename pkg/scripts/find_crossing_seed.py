"""Search for a seed whose two-layer GD run crosses an activation boundary.

Writes the first qualifying setup to tests/fixtures/two_layer_crossing.json.
Usage: python scripts/find_crossing_seed.py [--max-seed 100]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from relustab.model_core import DataPoint, Layout, sample_params
from relustab.trajectory import crossing_census, run_gd

X, Y = (1.0, -0.5), 1.0
INPUTS, HIDDEN = 2, 4
ETA, STEPS = 0.1, 200


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-seed", type=int, default=100)
    ap.add_argument("--out", default=Path(__file__).parents[1] / "tests/fixtures/two_layer_crossing.json")
    args = ap.parse_args()
    p = DataPoint(X, Y)
    lay = Layout.two_layer(INPUTS, HIDDEN)
    for seed in range(args.max_seed):
        theta0 = sample_params(np.random.default_rng(seed), lay)
        rec = run_gd(theta0, p, ETA, STEPS)
        census = crossing_census(rec)
        if census.total >= 1 and rec.halted_at is None:
            fixture = {
                "seed": seed,
                "x": list(X),
                "y": Y,
                "inputs": INPUTS,
                "hidden": HIDDEN,
                "eta": ETA,
                "steps": STEPS,
                "theta0": theta0.to_json(),
                "crossings": [list(c) for c in rec.crossings],
                "final_loss": rec.losses[-1],
            }
            Path(args.out).write_text(json.dumps(fixture, indent=2) + "\n")
            print(f"seed {seed}: {census.total} crossing(s), first at step {census.first_step}")
            return
    raise SystemExit("no crossing found")


if __name__ == "__main__":
    main()
