"""Classification metrics with one-vs-rest per-class counts and support weighting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "fpr")


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """``K x K`` counts, rows = true class, columns = predicted class."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise InputError("label and prediction arrays differ in shape")
    if t.size and (t.min() < 0 or p.min() < 0 or t.max() >= n_classes or p.max() >= n_classes):
        raise InputError("labels out of range")
    return np.bincount(t * n_classes + p, minlength=n_classes * n_classes).reshape(
        n_classes, n_classes
    )


@dataclass
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    overall_accuracy: float
    per_class: dict[str, list[float]] = field(default_factory=dict)
    # (metric, class) pairs where a per-class ratio had a zero denominator
    zero_division: list[tuple[str, int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "overall_accuracy": self.overall_accuracy,
            "zero_division": [list(z) for z in self.zero_division],
        }


def _ratio(num: float, den: float, name: str, k: int, flags: list) -> float:
    if den == 0:
        flags.append((name, k))
        return 0.0
    return num / den


def weighted_metrics(conf) -> MetricReport:
    """Per-class one-vs-rest metrics averaged with class support as weights.

    Classes with zero support get weight zero.  A zero denominator makes
    that per-class value 0 and is recorded in ``zero_division``.
    ``overall_accuracy`` is ``trace / total``; it coincides with the
    weighted one-vs-rest ``accuracy`` only for two classes.
    """
    c = np.asarray(conf, dtype=np.int64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InputError("confusion matrix must be square")
    if np.any(c < 0):
        raise InputError("confusion counts must be nonnegative")
    total = int(c.sum())
    if total <= 0:
        raise InputError("confusion matrix is empty")
    k = c.shape[0]
    support = c.sum(axis=1)
    flags: list[tuple[str, int]] = []
    per = {m: [] for m in METRIC_NAMES}
    for i in range(k):
        tp = int(c[i, i])
        fn = int(support[i] - tp)
        fp = int(c[:, i].sum() - tp)
        tn = total - tp - fn - fp
        prec = _ratio(tp, tp + fp, "precision", i, flags)
        rec = _ratio(tp, tp + fn, "recall", i, flags)
        f1 = _ratio(2 * prec * rec, prec + rec, "f1", i, flags)
        per["accuracy"].append((tp + tn) / total)
        per["precision"].append(prec)
        per["recall"].append(rec)
        per["f1"].append(f1)
        per["fpr"].append(_ratio(fp, fp + tn, "fpr", i, flags))
    # only flag classes that actually enter the average
    flags = [(m, i) for m, i in flags if support[i] > 0]
    w = support / total
    avg = {m: float(np.dot(w, per[m])) for m in METRIC_NAMES}
    return MetricReport(
        overall_accuracy=float(np.trace(c)) / total,
        per_class={m: [float(v) for v in per[m]] for m in METRIC_NAMES},
        zero_division=flags,
        **avg,
    )


def byte_ratio(sent: int, dense: int) -> float:
    if dense <= 0:
        raise InputError("dense byte count must be positive")
    return sent / dense


def average_communication_overhead(rounds: list[tuple[int, int]]) -> float:
    """Mean over rounds of ``sent / dense`` bytes; rounds without traffic are skipped."""
    ratios = [byte_ratio(s, d) for s, d in rounds if d > 0]
    if not ratios:
        return float("nan")
    return float(np.mean(ratios))


def average_round_time(durations) -> float:
    d = np.asarray(durations, dtype=np.float64)
    if d.size == 0:
        return float("nan")
    return float(d.mean())
