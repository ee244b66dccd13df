#!/usr/bin/env python3
"""Run every experiment with its paper-scale defaults and summarize verdicts.

Usage:
    python3 scripts/reproduce_all.py [--out results] [--fast]

``--fast`` shrinks the Monte Carlo sizes (minutes -> seconds) for a smoke run;
verdicts are still checked.  Exit code 0 iff every experiment passes.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from cgsde.experiments import run_experiment

RUNS = [
    ("ou-methods", {}, {"n_particles": 20_000, "ecd_t_final": 800.0,
                        "t_final": 30.0, "avg_t_final": 200.0, "n_bins": 16}),
    ("ou-methods", {"eps": 0.25}, None),     # full run only (the triad)
    ("gyongy-moments", {}, {"n_particles": 10_000}),
    ("gyongy-longtime", {}, {"n_particles": 10_000}),
    ("gyongy-fan", {}, {}),
    ("frozen-vs-conditional", {"example": "gradient"}, {}),
    ("frozen-vs-conditional", {"example": "j-block"}, {}),
    ("frozen-vs-conditional", {"example": "symplectic"}, {}),
    ("eps-sweep", {"family": "noisy-slow"}, {"pathwise_particles": 16}),
    ("eps-sweep", {"family": "deterministic-slow"}, {}),
    ("condition-audit", {"model": "ou"}, {}),
    ("condition-audit", {"model": "projected-noisy-slow"}, {}),
    ("condition-audit", {"model": "gyongy-deterministic-slow"}, {}),
]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--fast", action="store_true")
    args = ap.parse_args()
    root = Path(args.out)
    worst = 0
    for i, (exp, overrides, fast_overrides) in enumerate(RUNS):
        if args.fast:
            if fast_overrides is None:
                continue
            overrides = {**overrides, **fast_overrides}
        tag = "-".join([exp] + [f"{k}{v}" for k, v in sorted(overrides.items())
                                if k in ("eps", "example", "family", "model")])
        out = root / f"{i:02d}-{tag}"
        t0 = time.perf_counter()
        rc = run_experiment(exp, overrides, out)
        verdict = json.loads((out / "verdict.json").read_text())
        n_pass = sum(c["pass"] for c in verdict["checks"])
        print(f"[{'PASS' if rc == 0 else 'FAIL'}] {tag:55s} "
              f"{n_pass}/{len(verdict['checks'])} checks  "
              f"({time.perf_counter() - t0:.1f} s)  -> {out}")
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(main())
