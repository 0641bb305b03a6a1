"""Per-client learning rates from round-weighted participation frequency.

A client that joined rounds ``P_i`` has weighted frequency
``f_i = sum_{r in P_i} h(r) / sum_j sum_{r in P_j} h(r)`` and trains with
``eta_i = lam / (M * f_i)`` clamped to ``[lam / 10, 10 * lam]``.
Frequent clients therefore take smaller steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

ROUND_WEIGHT_KINDS = ("constant", "logarithmic", "polynomial", "exp-smoothing", "exponential")


@dataclass(frozen=True)
class RoundWeightFunction:
    """``h(r)`` over absolute round index, positive and non-decreasing.

    constant       1
    logarithmic    ln(2 + r)      (shifted by one so that h(0) > 0)
    polynomial     (1 + r) ** a
    exp-smoothing  (1 + a) ** r
    exponential    a ** r         (a > 1)
    """

    kind: str = "constant"
    a: float | None = None

    def __post_init__(self):
        if self.kind not in ROUND_WEIGHT_KINDS:
            raise ConfigurationError(f"unknown round-weight function {self.kind!r}")
        a = self.param_a
        if self.kind in ("polynomial", "exp-smoothing") and a <= 0:
            raise ConfigurationError(f"{self.kind} round weight needs a > 0")
        if self.kind == "exponential" and a <= 1:
            raise ConfigurationError("exponential round weight needs a > 1")

    @property
    def param_a(self) -> float:
        if self.a is not None:
            return float(self.a)
        return {
            "constant": 0.0,
            "logarithmic": 0.0,
            "polynomial": 0.5,
            "exp-smoothing": 0.1,
            "exponential": math.e / 2,
        }[self.kind]

    @property
    def strictly_increasing(self) -> bool:
        return self.kind != "constant"

    def __call__(self, r: int) -> float:
        if r < 0:
            raise InputError(f"round must be nonnegative, got {r}")
        a = self.param_a
        if self.kind == "constant":
            return 1.0
        if self.kind == "logarithmic":
            return math.log(2.0 + r)
        if self.kind == "polynomial":
            return (1.0 + r) ** a
        if self.kind == "exp-smoothing":
            return (1.0 + a) ** r
        return a ** r


@dataclass
class ParticipationTracker:
    """Rounds each client has joined, in increasing order."""

    n_clients: int
    history: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigurationError("need at least one client")
        if not self.history:
            self.history = [[] for _ in range(self.n_clients)]
        if len(self.history) != self.n_clients:
            raise ConfigurationError("history length must equal n_clients")

    def record(self, round_index: int, client_ids) -> None:
        for cid in sorted(set(int(c) for c in client_ids)):
            joined = self.history[cid]
            if joined and joined[-1] >= round_index:
                raise InputError(
                    f"client {cid} already recorded at round {joined[-1]}, cannot add {round_index}"
                )
            joined.append(round_index)

    def frequency(self, h: RoundWeightFunction) -> np.ndarray:
        """Weighted participation frequencies; uniform before anyone joined."""
        mass = np.array([sum(h(r) for r in joined) for joined in self.history], dtype=np.float64)
        total = mass.sum()
        if total <= 0:
            return np.full(self.n_clients, 1.0 / self.n_clients)
        return mass / total


def frequency(tracker: ParticipationTracker, h: RoundWeightFunction) -> np.ndarray:
    return tracker.frequency(h)


def adaptive_rate(f_i: float, lam: float, n_clients: int, clamp: bool = True) -> float:
    """``lam / (M * f_i)`` clamped to ``[lam/10, 10*lam]``; ``f_i = 0`` uses ``1/(10M)``."""
    if lam <= 0:
        raise InputError("global learning rate must be positive")
    if not 0 <= f_i <= 1:
        raise InputError(f"frequency must be in [0, 1], got {f_i}")
    if f_i == 0:
        f_i = 1.0 / (10 * n_clients)
    eta = lam / (n_clients * f_i)
    if clamp:
        eta = min(max(eta, lam / 10), 10 * lam)
    return eta


def adaptive_rates(
    tracker: ParticipationTracker, h: RoundWeightFunction, lam: float, clamp: bool = True
) -> np.ndarray:
    f = tracker.frequency(h)
    return np.array([adaptive_rate(fi, lam, tracker.n_clients, clamp) for fi in f])
