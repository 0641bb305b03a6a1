"""Replay the 5-client, C=0.4, tau=2 example and print the staleness table."""

from feds3a.config import ExperimentConfig, resolve
from feds3a.protocol import run_experiment

LONG = 100.0
# durations of each client's successive local runs
SCRIPT = {0: [1, 1], 1: [2, 2], 2: [3.5, 1.5], 3: [4.5], 4: [LONG, 1.0]}


def durations(cid: int, k: int) -> float:
    seq = SCRIPT[cid]
    return float(seq[k]) if k < len(seq) else LONG


def main() -> None:
    cfg = resolve(ExperimentConfig(n_clients=5, c_fraction=0.4, tau=2, rounds=4,
                                   per_class=300, warmup_epochs=3))
    trace = run_experiment(cfg, duration_fn=durations).trace
    print("round  time  " + "  ".join(f"C{i + 1}" for i in range(5)) + "  deprecated")
    for rec in trace:
        cells = "  ".join(f"{s:2d}" for s in rec["staleness"])
        dep = ",".join(f"C{c + 1}" for c in rec["deprecated"]) or "-"
        print(f"r{rec['round']:<4} {rec['time']:5.1f}  {cells}  {dep}")


if __name__ == "__main__":
    main()
