"""K-means grouping of clients by class distribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError
from .seeding import rng_for


@dataclass(frozen=True)
class GroupingConfig:
    n_groups: int = 3
    source: str = "pseudo"  # or "oracle": true label histograms, simulator only
    max_iter: int = 100
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.n_groups < 1:
            raise ConfigurationError("n_groups must be positive")
        if self.source not in ("pseudo", "oracle"):
            raise ConfigurationError(f"unknown histogram source {self.source!r}")
        if self.max_iter < 1 or self.tol < 0:
            raise ConfigurationError("max_iter must be positive and tol nonnegative")


def normalize_histogram(hist) -> np.ndarray:
    h = np.asarray(hist, dtype=np.float64)
    total = h.sum()
    if total <= 0:
        return np.full(h.shape, 1.0 / h.size)
    return h / total


def kmeans(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100, tol: float = 1e-10
) -> np.ndarray:
    """k-means++ seeding then Lloyd iterations.  Returns a label per point.

    Seeding stops early when every remaining point coincides with a chosen
    center, so duplicated inputs yield fewer clusters.
    """
    n = points.shape[0]
    k = min(k, n)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    while len(centers) < k:
        total = d2.sum()
        if total <= 0:
            break
        idx = rng.choice(n, p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    c = np.array(centers)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = ((points[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        new = c.copy()
        for j in range(c.shape[0]):
            members = points[labels == j]
            if members.size:
                new[j] = members.mean(axis=0)
        shift = float(np.abs(new - c).max())
        c = new
        if shift <= tol:
            break
    dist = ((points[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    return dist.argmin(axis=1)


def group_clients(
    participants: Sequence[tuple[int, np.ndarray]],
    cfg: GroupingConfig,
    round_index: int = 0,
) -> dict[int, int]:
    """Map client id to a group label ``0..G-1``.

    Histograms must already be probability vectors.  Labels are renumbered
    in order of the smallest client id in each group, so empty clusters
    vanish and the output does not depend on k-means label order.
    """
    if len(participants) < 1:
        raise InputError("grouping needs at least one participant")
    ordered = sorted(participants, key=lambda t: t[0])
    pts = np.stack([np.asarray(h, dtype=np.float64) for _, h in ordered])
    if np.any(pts < 0) or np.any(np.abs(pts.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("histograms must be probability vectors")
    if cfg.n_groups == 1 or len(ordered) == 1:
        return {cid: 0 for cid, _ in ordered}
    rng = rng_for(cfg.seed, "kmeans", round_index)
    raw = kmeans(pts, cfg.n_groups, rng, cfg.max_iter, cfg.tol)
    relabel: dict[int, int] = {}
    out = {}
    for (cid, _), lab in zip(ordered, raw.tolist()):
        if lab not in relabel:
            relabel[lab] = len(relabel)
        out[cid] = relabel[lab]
    return out
