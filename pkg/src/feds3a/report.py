"""Run artifacts: per-round JSONL trace, summary JSON, comparison CSV tables.

The summary is computed from the trace alone, so ``regenerate_summary`` on a
saved ``trace.jsonl`` reproduces ``summary.json`` byte for byte.

Trace line (one per global update)::

    round, time, duration, participants, gaps, staleness, deprecated,
    tolerable, groups, supervised_weight, uplink_bytes, downlink_bytes,
    dense_bytes, byte_ratio, sparsity, learning_rates, coverage,
    metrics{accuracy, precision, recall, f1, fpr, overall_accuracy,
    zero_division}, checksum

Summary keys: rounds, aco, art, final_time, final_metrics, checksum,
median_sparsity, uplink_bytes, downlink_bytes, dense_bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig, echo
from .metrics import METRIC_NAMES, average_communication_overhead, average_round_time

SUMMARY_METRICS = (*METRIC_NAMES, "overall_accuracy")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def trace_lines(trace: Iterable[dict]) -> str:
    return "".join(_dumps(rec) + "\n" for rec in trace)


def read_trace(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def summarize(trace: Sequence[dict]) -> dict:
    """Headline numbers of one run, derived only from its trace."""
    if not trace:
        return {"rounds": 0}
    last = trace[-1]
    sparsity = [s for rec in trace for s in rec["sparsity"]]
    return {
        "rounds": len(trace),
        "aco": average_communication_overhead(
            [(r["uplink_bytes"] + r["downlink_bytes"], r["dense_bytes"]) for r in trace]
        ),
        "art": average_round_time([r["duration"] for r in trace]),
        "final_time": last["time"],
        "final_metrics": {k: last["metrics"][k] for k in SUMMARY_METRICS},
        "checksum": last["checksum"],
        "median_sparsity": float(np.median(sparsity)) if sparsity else 0.0,
        "uplink_bytes": int(sum(r["uplink_bytes"] for r in trace)),
        "downlink_bytes": int(sum(r["downlink_bytes"] for r in trace)),
        "dense_bytes": int(sum(r["dense_bytes"] for r in trace)),
    }


def summary_text(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"


def regenerate_summary(trace_path: str | Path) -> str:
    return summary_text(summarize(read_trace(trace_path)))


def write_run(run_dir: str | Path, cfg: ExperimentConfig, trace: Sequence[dict]) -> dict:
    """Write ``config.yaml``, ``trace.jsonl`` and ``summary.json`` into ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    echo(cfg, run_dir)
    (run_dir / "trace.jsonl").write_text(trace_lines(trace), encoding="utf-8")
    summary = summarize(trace)
    (run_dir / "summary.json").write_text(summary_text(summary), encoding="utf-8")
    return summary


def mean_summary(summaries: Sequence[dict]) -> dict:
    """Seed-averaged headline numbers (mean of every numeric field)."""
    if not summaries:
        return {"repetitions": 0}
    out: dict = {"repetitions": len(summaries)}
    for key in ("aco", "art", "final_time", "median_sparsity", "rounds"):
        out[key] = float(np.mean([s[key] for s in summaries]))
    out["final_metrics"] = {
        k: float(np.mean([s["final_metrics"][k] for s in summaries])) for k in SUMMARY_METRICS
    }
    return out


TABLE_COLUMNS = ("label", "accuracy", "precision", "recall", "f1", "fpr", "overall_accuracy", "aco", "art")


def table_row(label: str, summary: dict) -> list:
    m = summary["final_metrics"]
    return [label, *(m[k] for k in SUMMARY_METRICS), summary["aco"], summary["art"]]


def write_table(path: str | Path, rows: Sequence[Sequence], columns: Sequence[str] = TABLE_COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])
    return path
