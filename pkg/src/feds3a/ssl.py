"""Pseudo-label training on clients and supervised training on the server."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, UnlabeledView
from .errors import ConfigurationError
from .nn import (
    ModelSpec,
    OptimizerState,
    ParamVector,
    VersionedModel,
    forward,
    loss_and_grad,
    optimizer_step,
    pseudo_label_loss_and_grad,
)
from .seeding import rng_for


@dataclass(frozen=True)
class PseudoLabelConfig:
    threshold: float = 0.95
    batch_size: int = 100
    epochs: int = 1

    def __post_init__(self):
        if not 0 <= self.threshold <= 1:
            raise ConfigurationError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.batch_size <= 0 or self.epochs < 0:
            raise ConfigurationError("batch_size must be positive and epochs nonnegative")


@dataclass
class TrainStats:
    losses: list[float] = field(default_factory=list)
    coverage: list[float] = field(default_factory=list)
    # pseudo-label counts of the last pass (confident rows only)
    pseudo_hist: np.ndarray | None = None
    # argmax counts over every row of the last pass
    argmax_hist: np.ndarray | None = None
    steps: int = 0

    def class_histogram(self) -> np.ndarray | None:
        """Pseudo-label distribution, falling back to raw argmax when nothing passed."""
        if self.pseudo_hist is not None and self.pseudo_hist.sum() > 0:
            return self.pseudo_hist
        if self.argmax_hist is not None and self.argmax_hist.sum() > 0:
            return self.argmax_hist
        return None


def pseudo_label_mask(probs: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """One-hot argmax targets and the ``max(p) >= threshold`` mask."""
    labels = probs.argmax(axis=1)
    targets = np.zeros_like(probs)
    targets[np.arange(probs.shape[0]), labels] = 1.0
    mask = (probs.max(axis=1) >= threshold).astype(np.float64)
    return targets, mask


def pseudo_label_coverage(params: ParamVector, spec: ModelSpec, x: np.ndarray, threshold: float) -> float:
    if len(x) == 0:
        return 0.0
    return float((forward(params, spec, x).max(axis=1) >= threshold).mean())


def client_local_training(
    start: VersionedModel,
    data: UnlabeledView,
    spec: ModelSpec,
    cfg: PseudoLabelConfig,
    opt: OptimizerState,
    seed: int,
) -> tuple[ParamVector, TrainStats]:
    """Pseudo-label self-training over an unlabeled partition.

    Pseudo-labels are recomputed per mini-batch from the current parameters
    and treated as constants.  ``seed`` drives shuffling and dropout.
    """
    params = start.params
    stats = TrainStats()
    n = len(data)
    if n == 0:
        stats.coverage = [0.0] * cfg.epochs
        return params, stats
    x_all = data.features
    rng = rng_for(seed, "client-train")
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        covered = 0
        pseudo = np.zeros(spec.n_classes, dtype=np.int64)
        argmax = np.zeros(spec.n_classes, dtype=np.int64)
        for lo in range(0, n, cfg.batch_size):
            xb = x_all[order[lo:lo + cfg.batch_size]]
            loss, grad, labels, mask = pseudo_label_loss_and_grad(
                params, spec, xb, cfg.threshold, rng=rng
            )
            argmax += np.bincount(labels, minlength=spec.n_classes)
            pseudo += np.bincount(labels[mask > 0], minlength=spec.n_classes)
            covered += int(mask.sum())
            params = optimizer_step(opt, params, grad)
            total_loss += loss * len(xb)
            stats.steps += 1
        stats.losses.append(total_loss / n)
        stats.coverage.append(covered / n)
        stats.pseudo_hist = pseudo
        stats.argmax_hist = argmax
    return params, stats


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def server_supervised_training(
    start: ParamVector,
    data: Dataset,
    spec: ModelSpec,
    epochs: int,
    batch_size: int,
    opt: OptimizerState,
    seed: int,
) -> tuple[ParamVector, TrainStats]:
    """Plain mini-batch cross-entropy training on labeled data."""
    if len(data) == 0:
        raise ConfigurationError("the server needs labeled data")
    params = start
    stats = TrainStats()
    rng = rng_for(seed, "server-train")
    n = len(data)
    targets_all = _one_hot(data.labels, spec.n_classes)
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            loss, grad = loss_and_grad(params, spec, data.features[idx], targets_all[idx], rng=rng)
            params = optimizer_step(opt, params, grad)
            total += loss * idx.size
            stats.steps += 1
        stats.losses.append(total / n)
    return params, stats


def centralized_ssl(
    start: ParamVector,
    labeled: Dataset,
    unlabeled: UnlabeledView,
    spec: ModelSpec,
    cfg: PseudoLabelConfig,
    epochs: int,
    opt: OptimizerState,
    seed: int,
) -> tuple[ParamVector, list[float]]:
    """Pool everything on one machine: each epoch is a supervised pass then a
    pseudo-label pass.  Used as the accuracy ceiling for the federated runs.
    """
    params = start
    coverage = []
    for e in range(epochs):
        params, _ = server_supervised_training(
            params, labeled, spec, 1, cfg.batch_size, opt, seed * 7919 + 2 * e
        )
        params, st = client_local_training(
            VersionedModel(params, e),
            unlabeled,
            spec,
            PseudoLabelConfig(cfg.threshold, cfg.batch_size, 1),
            opt,
            seed * 7919 + 2 * e + 1,
        )
        coverage.append(st.coverage[-1])
    return params, coverage
