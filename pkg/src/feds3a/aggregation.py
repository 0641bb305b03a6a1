"""Global model arithmetic: FedAvg, the supervised-weight schedule, staleness
discounts and group-based aggregation.

Every function here is pure.  Client models arrive as
:class:`~feds3a.nn.VersionedModel`; the version is the global round the
client started training from, so its staleness at aggregation time is
``current_version - model.version``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError, NumericError, VersionError
from .nn import ParamVector, VersionedModel

STALENESS_KINDS = ("constant", "polynomial", "hinge", "exponential")
SCHEDULE_MODES = ("dynamic", "fixed", "size")


@dataclass(frozen=True)
class StalenessFunction:
    """``g(gap)`` with ``g(0) = 1``, positive and non-increasing.

    constant     g = 1
    polynomial   g = (gap + 1) ** -a
    hinge        g = 1 if gap <= b else 1 / (a * (gap - b) + 1)
    exponential  g = a ** -gap        (a > 1)
    """

    kind: str = "constant"
    a: float | None = None
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in STALENESS_KINDS:
            raise ConfigurationError(f"unknown staleness function {self.kind!r}")
        a = self.param_a
        if self.kind == "polynomial" and a <= 0:
            raise ConfigurationError("polynomial staleness needs a > 0")
        if self.kind == "hinge" and (a <= 0 or self.b < 0):
            raise ConfigurationError("hinge staleness needs a > 0 and b >= 0")
        if self.kind == "exponential" and a <= 1:
            raise ConfigurationError("exponential staleness needs a > 1")

    @property
    def param_a(self) -> float:
        if self.a is not None:
            return float(self.a)
        return {"constant": 0.0, "polynomial": 0.5, "hinge": 1.0, "exponential": math.e / 2}[
            self.kind
        ]

    def __call__(self, gap: int) -> float:
        if gap < 0:
            raise VersionError(f"negative staleness gap {gap}")
        a = self.param_a
        if self.kind == "constant":
            return 1.0
        if self.kind == "polynomial":
            return float((gap + 1) ** -a)
        if self.kind == "hinge":
            if gap <= self.b:
                return 1.0
            return 1.0 / (a * (gap - self.b) + 1.0)
        return float(a ** -gap)


def staleness_weight(g: StalenessFunction, gap: int) -> float:
    return g(gap)


@dataclass(frozen=True)
class SupervisedWeightSchedule:
    """Weight ``f(r)`` of the server model in the global update.

    ``dynamic``: ``f(r) = beta + (alpha - beta) * gamma ** r``.
    ``fixed``: ``f(r) = alpha``.
    ``size``: the server's share of all labeled plus unlabeled samples in
    the update, ``|D_s| / (|D_s| + sum |D_i|)``; needs sizes at call time.
    """

    alpha: float = 0.5
    beta: float = 1.0 / 7.0
    gamma: float = 0.9
    mode: str = "dynamic"

    def __post_init__(self):
        if self.mode not in SCHEDULE_MODES:
            raise ConfigurationError(f"unknown supervised-weight mode {self.mode!r}")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.mode == "dynamic":
            if not 0 < self.beta <= self.alpha:
                raise ConfigurationError(f"beta must be in (0, alpha], got {self.beta}")
            if not 0 < self.gamma < 1:
                raise ConfigurationError(f"gamma must be in (0, 1), got {self.gamma}")

    @classmethod
    def for_quorum(cls, c_fraction: float, n_clients: int, **kw) -> SupervisedWeightSchedule:
        """Default asymptote ``1 / (C*M + 1)``: the server weighs as much as one client."""
        return cls(beta=1.0 / (c_fraction * n_clients + 1.0), **kw)

    def __call__(
        self,
        r: int,
        server_size: int | None = None,
        client_sizes: Sequence[int] | None = None,
    ) -> float:
        if r < 0:
            raise InputError(f"round must be nonnegative, got {r}")
        if self.mode == "fixed":
            return self.alpha
        if self.mode == "size":
            if server_size is None or client_sizes is None:
                raise InputError("size-based supervised weight needs server and client sizes")
            total = server_size + float(np.sum(client_sizes))
            if total <= 0:
                raise InputError("sizes sum to zero")
            return server_size / total
        f = self.beta + (self.alpha - self.beta) * self.gamma ** r
        # rounding can leave the closed form one ulp outside [beta, alpha]
        return min(max(f, self.beta), self.alpha)


def supervised_weight(schedule: SupervisedWeightSchedule, r: int, **sizes) -> float:
    return schedule(r, **sizes)


def _stack(models: Sequence[ParamVector]) -> np.ndarray:
    shapes = models[0].shapes
    for m in models[1:]:
        if m.shapes != shapes:
            raise ConfigurationError("models have different parameter layouts")
    return np.stack([m.values for m in models])


def fedavg(models: Sequence[tuple[ParamVector, float]]) -> ParamVector:
    """Size-weighted mean ``sum |D_i| / |D| * w_i``."""
    if not models:
        raise InputError("fedavg needs at least one model")
    sizes = np.array([s for _, s in models], dtype=np.float64)
    if np.any(sizes <= 0):
        raise InputError("data sizes must be positive")
    weights = sizes / sizes.sum()
    values = weights @ _stack([m for m, _ in models])
    return models[0][0].with_values(values)


def naive_ssl_average(
    server: ParamVector, server_size: int, clients: Sequence[tuple[ParamVector, float]]
) -> ParamVector:
    """Server and clients averaged by data size, labeled and unlabeled alike."""
    return fedavg([(server, server_size), *clients])


@dataclass(frozen=True, eq=False)
class Participant:
    client_id: int
    model: VersionedModel
    size: int
    group: int = 0


def participant_weights(
    participants: Sequence[Participant],
    current_version: int,
    g: StalenessFunction,
    normalize: bool = True,
) -> np.ndarray:
    """Each client's coefficient in the client term (before the ``1 - f`` factor).

    Within a group: ``|D_i| / |D_G| * g(gap_i)``, renormalized to sum to 1
    when ``normalize`` is set.  Groups then share the client term equally.
    Empty partitions (size 0) get weight 0.
    """
    if not participants:
        raise InputError("aggregation needs at least one participant")
    sizes = np.array([p.size for p in participants], dtype=np.float64)
    gaps = [current_version - p.model.version for p in participants]
    disc = np.array([g(gap) for gap in gaps])
    groups = np.array([p.group for p in participants])
    labels = sorted(set(groups.tolist()))
    w = np.zeros(len(participants))
    for label in labels:
        idx = np.flatnonzero(groups == label)
        total = sizes[idx].sum()
        if total > 0:
            w[idx] = sizes[idx] / total * disc[idx]
        else:
            w[idx] = disc[idx] / idx.size
        if normalize and w[idx].sum() > 0:
            w[idx] /= w[idx].sum()
    return w / len(labels)


def aggregate(
    server: ParamVector,
    participants: Sequence[Participant],
    current_version: int,
    schedule: SupervisedWeightSchedule,
    g: StalenessFunction,
    normalize: bool = True,
    *,
    server_size: int | None = None,
) -> ParamVector:
    """``f(r) * w_s + (1 - f(r)) * mean over groups of the discounted group sum``.

    ``current_version`` is the version of the global model being replaced;
    the schedule is evaluated at the same index.
    """
    for p in participants:
        if not np.isfinite(p.model.params.values).all():
            raise NumericError(f"client {p.client_id} sent non-finite parameters")
    w = participant_weights(participants, current_version, g, normalize)
    f = schedule(
        current_version,
        server_size=server_size,
        client_sizes=[p.size for p in participants],
    )
    client_term = w @ _stack([p.model.params for p in participants])
    if server.shapes != participants[0].model.params.shapes:
        raise ConfigurationError("server and client models have different layouts")
    return server.with_values(f * server.values + (1.0 - f) * client_term)
