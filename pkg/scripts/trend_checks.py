"""Seed sweep behind the trend comparisons: tau, adaptive lr, grouping, C.

Usage: python scripts/trend_checks.py [--seeds 5] [--rounds 50]
"""

import argparse

import numpy as np

from feds3a.config import ExperimentConfig, resolve
from feds3a.protocol import run_experiment
from feds3a.report import summarize

VARIANTS = {
    "default": {},
    "tau=0": {"tau": 0},
    "adaptive lr off": {"adaptive_lr": False},
    "ungrouped": {"n_groups": 1},
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--rounds", type=int, default=50)
    args = ap.parse_args()

    for label, kw in VARIANTS.items():
        accs = []
        for seed in range(args.seeds):
            cfg = resolve(ExperimentConfig(seed=seed, rounds=args.rounds, **kw))
            accs.append(summarize(run_experiment(cfg).trace)["final_metrics"]["overall_accuracy"])
        print(f"{label:16s} median {np.median(accs):.4f}  per seed {np.round(accs, 4).tolist()}")

    for c in (0.1, 0.4, 0.6, 1.0):
        s = summarize(run_experiment(resolve(ExperimentConfig(c_fraction=c, rounds=args.rounds))).trace)
        print(f"C={c:<4} ART {s['art']:7.1f}  accuracy {s['final_metrics']['overall_accuracy']:.4f}")


if __name__ == "__main__":
    main()
