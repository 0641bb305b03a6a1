"""Experiment configuration: one flat dataclass, YAML in and out.

Fields left as ``None`` take scenario-dependent defaults in
:func:`resolve`.  The echoed effective config has every field filled in
and parses back to an equal object.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, get_type_hints

import yaml

from .adaptive_lr import ROUND_WEIGHT_KINDS, RoundWeightFunction
from .aggregation import SCHEDULE_MODES, STALENESS_KINDS, StalenessFunction, SupervisedWeightSchedule
from .errors import ConfigurationError, ValidationError
from .grouping import GroupingConfig

SCENARIOS = ("synthetic", "basic", "balanced")
BASELINES = ("feds3a", "fedavg-partial", "fedavg-all", "fedasync")

# staleness and round-weight defaults per data regime
SCENARIO_DEFAULTS = {
    "synthetic": ("exponential", "exponential"),
    "basic": ("exponential", "exponential"),
    "balanced": ("polynomial", "exp-smoothing"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    scenario: str = "synthetic"
    data_path: str | None = None
    label_column: str = "Label"
    test_fraction: float = 0.1
    server_fraction: float = 0.05
    n_classes: int = 3
    per_class: int = 20000
    feature_dim: int = 8
    separation: float = 6.0
    skew_alpha: float = 0.3
    # federation
    n_clients: int = 10
    c_fraction: float = 0.6
    tau: int = 2
    rounds: int = 50
    # training
    threshold: float = 0.95
    batch_size: int = 100
    epochs: int = 1
    warmup_epochs: int | None = None
    hidden: tuple[int, ...] | None = None
    dropout: float = 0.0
    l1: float = 1e-5
    optimizer: str = "adam"
    lr: float = 1e-4
    # aggregation
    f_mode: str = "dynamic"
    f_alpha: float = 0.5
    f_beta: float | None = None
    f_gamma: float = 0.9
    staleness: str | None = None
    staleness_a: float | None = None
    staleness_b: float = 0.0
    normalize: bool = True
    n_groups: int = 3
    histogram_source: str = "pseudo"
    # adaptive learning rate
    adaptive_lr: bool = True
    round_weight: str | None = None
    round_weight_a: float | None = None
    lr_clamp: bool = True
    # transport
    transport: str = "sparse"
    zero_threshold: float = 1e-8
    # durations (virtual seconds)
    largest_duration: float = 317.0
    duration_exponent: float = 0.42
    duration_sigma: float = 0.1
    spike_prob: float = 0.0
    spike_factor: float = 3.0
    # run control
    baseline: str = "feds3a"
    early_stop: bool = False
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0
    repetitions: int = 1

    # derived views -----------------------------------------------------
    @property
    def quorum(self) -> int:
        # round() guards against 0.6 * 10 = 6.000000000000001
        return max(1, math.ceil(round(self.c_fraction * self.n_clients, 9)))

    @property
    def is_synthetic(self) -> bool:
        return self.scenario == "synthetic"

    def schedule(self) -> SupervisedWeightSchedule:
        beta = self.f_beta
        if beta is None:
            # capped at alpha so tiny quorums (C*M < 1) still give a valid schedule
            beta = min(1.0 / (self.c_fraction * self.n_clients + 1.0), self.f_alpha)
        return SupervisedWeightSchedule(self.f_alpha, beta, self.f_gamma, self.f_mode)

    def staleness_fn(self) -> StalenessFunction:
        return StalenessFunction(self.staleness, self.staleness_a, self.staleness_b)

    def round_weight_fn(self) -> RoundWeightFunction:
        return RoundWeightFunction(self.round_weight, self.round_weight_a)

    def grouping(self) -> GroupingConfig:
        return GroupingConfig(self.n_groups, self.histogram_source, seed=self.seed)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))
_HINTS = get_type_hints(ExperimentConfig)


def _coerce(name: str, value: Any) -> Any:
    hint = _HINTS[name]
    text = str(hint)
    if value is None:
        if "None" in text:
            return None
        raise ValidationError(name, "must not be null")
    try:
        if "tuple" in text:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return tuple(int(v) for v in value)
        if hint is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "yes", "no", "1", "0"):
                return value.lower() in ("true", "yes", "1")
            raise ValueError(value)
        if text.startswith("int") or hint is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if text.startswith("float") or hint is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"cannot interpret {value!r} as {text}") from None


def _check(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ValidationError(name, msg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Raise :class:`ValidationError` naming the first field out of bounds."""
    _check(cfg.scenario in SCENARIOS, "scenario", f"must be one of {SCENARIOS}")
    _check(cfg.baseline in BASELINES, "baseline", f"must be one of {BASELINES}")
    _check(cfg.scenario == "synthetic" or cfg.data_path is not None, "data_path",
           "required for CSV scenarios")
    _check(0 < cfg.test_fraction < 1, "test_fraction", "must be in (0, 1)")
    _check(0 < cfg.server_fraction < 1, "server_fraction", "must be in (0, 1)")
    _check(cfg.n_classes >= 2, "n_classes", "must be >= 2")
    _check(cfg.per_class >= 1, "per_class", "must be >= 1")
    _check(cfg.feature_dim >= cfg.n_classes, "feature_dim", "must be >= n_classes")
    _check(cfg.separation > 0, "separation", "must be > 0")
    _check(cfg.skew_alpha > 0, "skew_alpha", "must be > 0")
    _check(cfg.n_clients >= 2, "n_clients", "must be >= 2")
    _check(0 < cfg.c_fraction <= 1, "c_fraction", "must be in (0, 1]")
    _check(cfg.tau >= 0, "tau", "must be >= 0")
    _check(cfg.rounds >= 1, "rounds", "must be >= 1")
    _check(0 < cfg.threshold <= 1, "threshold", "must be in (0, 1]")
    _check(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    _check(cfg.epochs >= 1, "epochs", "must be >= 1")
    _check(cfg.warmup_epochs is None or cfg.warmup_epochs >= 0, "warmup_epochs", "must be >= 0")
    _check(cfg.hidden is None or all(h > 0 for h in cfg.hidden), "hidden", "widths must be > 0")
    _check(0 <= cfg.dropout < 1, "dropout", "must be in [0, 1)")
    _check(cfg.l1 >= 0, "l1", "must be >= 0")
    _check(cfg.optimizer in ("adam", "sgd"), "optimizer", "must be adam or sgd")
    _check(cfg.lr > 0, "lr", "must be > 0")
    _check(cfg.f_mode in SCHEDULE_MODES, "f_mode", f"must be one of {SCHEDULE_MODES}")
    _check(0 < cfg.f_alpha < 1, "f_alpha", "must be in (0, 1)")
    _check(cfg.f_beta is None or 0 < cfg.f_beta < 1, "f_beta", "must be in (0, 1)")
    _check(cfg.f_mode != "dynamic" or cfg.f_beta is None or cfg.f_beta <= cfg.f_alpha, "f_beta",
           "must not exceed f_alpha for the dynamic schedule")
    _check(0 < cfg.f_gamma < 1, "f_gamma", "must be in (0, 1)")
    _check(cfg.staleness is None or cfg.staleness in STALENESS_KINDS, "staleness",
           f"must be one of {STALENESS_KINDS}")
    _check(cfg.round_weight is None or cfg.round_weight in ROUND_WEIGHT_KINDS, "round_weight",
           f"must be one of {ROUND_WEIGHT_KINDS}")
    _check(cfg.n_groups >= 1, "n_groups", "must be >= 1")
    _check(cfg.histogram_source in ("pseudo", "oracle"), "histogram_source", "must be pseudo or oracle")
    _check(cfg.transport in ("sparse", "dense"), "transport", "must be sparse or dense")
    _check(cfg.zero_threshold >= 0, "zero_threshold", "must be >= 0")
    _check(cfg.largest_duration > 0, "largest_duration", "must be > 0")
    _check(cfg.duration_exponent >= 0, "duration_exponent", "must be >= 0")
    _check(cfg.duration_sigma >= 0, "duration_sigma", "must be >= 0")
    _check(0 <= cfg.spike_prob <= 1, "spike_prob", "must be in [0, 1]")
    _check(cfg.spike_factor >= 1, "spike_factor", "must be >= 1")
    _check(cfg.patience >= 1, "patience", "must be >= 1")
    _check(cfg.min_delta >= 0, "min_delta", "must be >= 0")
    _check(cfg.repetitions >= 1, "repetitions", "must be >= 1")
    _check(cfg.seed >= 0, "seed", "must be >= 0")
    try:
        if cfg.staleness is not None:
            cfg.staleness_fn()
        if cfg.round_weight is not None:
            cfg.round_weight_fn()
        if cfg.f_mode == "dynamic":
            cfg.schedule()
    except ConfigurationError as exc:
        raise ValidationError("function parameters", str(exc)) from None
    return cfg


def apply_baseline(cfg: ExperimentConfig) -> ExperimentConfig:
    """Pin the settings that define a baseline; idempotent."""
    if cfg.baseline == "fedavg-all":
        return cfg.replace(c_fraction=1.0, tau=0, staleness="constant", staleness_a=None,
                           round_weight="constant", round_weight_a=None, n_groups=1,
                           transport="dense", adaptive_lr=False)
    if cfg.baseline == "fedavg-partial":
        return cfg.replace(staleness="constant", staleness_a=None, round_weight="constant",
                           round_weight_a=None, n_groups=1, transport="dense", adaptive_lr=False)
    if cfg.baseline == "fedasync":
        return cfg.replace(c_fraction=1.0 / cfg.n_clients, tau=16, staleness="polynomial",
                           staleness_a=0.5, round_weight="constant", round_weight_a=None,
                           n_groups=1, transport="dense", adaptive_lr=False)
    return cfg


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill scenario defaults, apply the baseline, validate."""
    validate(cfg)
    g_kind, h_kind = SCENARIO_DEFAULTS[cfg.scenario]
    changes: dict[str, Any] = {}
    if cfg.staleness is None:
        changes["staleness"] = g_kind
    if cfg.round_weight is None:
        changes["round_weight"] = h_kind
    if cfg.warmup_epochs is None:
        # synthetic server shares are ~9x smaller than the CIC one, so the
        # warm-up runs ~9x more epochs for a comparable number of steps
        changes["warmup_epochs"] = 45 if cfg.is_synthetic else 5
    if cfg.hidden is None:
        changes["hidden"] = (32,) if cfg.is_synthetic else (64, 32)
    out = apply_baseline(cfg.replace(**changes))
    if out.staleness_a is None:
        out = out.replace(staleness_a=out.staleness_fn().param_a)
    if out.round_weight_a is None:
        out = out.replace(round_weight_a=out.round_weight_fn().param_a)
    if out.f_beta is None:
        out = out.replace(f_beta=out.schedule().beta)
    return validate(out)


def from_mapping(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(FIELD_NAMES))
    if unknown:
        raise ValidationError(unknown[0], f"unknown field (known: {', '.join(FIELD_NAMES)})")
    return validate(ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()}))


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with a YAML-typed value; dashes in keys become underscores."""
    if "=" not in text:
        raise ValidationError(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip().replace("-", "_")
    if key not in FIELD_NAMES:
        raise ValidationError(key, "unknown field")
    return key, yaml.safe_load(raw) if raw.strip() else None


def parse_and_validate(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Load YAML (missing or empty file means all defaults), apply overrides, resolve."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        loaded = yaml.safe_load(text) if text.strip() else None
        if loaded is not None and not isinstance(loaded, dict):
            raise ValidationError("<file>", "config must be a mapping of field: value")
        data.update(loaded or {})
    data.update(overrides or {})
    return resolve(from_mapping(data))


def to_mapping(cfg: ExperimentConfig) -> dict:
    out = {}
    for name in FIELD_NAMES:
        v = getattr(cfg, name)
        out[name] = list(v) if isinstance(v, tuple) else v
    return out


def dump_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_mapping(cfg), sort_keys=False)


def echo(cfg: ExperimentConfig, run_dir: str | Path) -> Path:
    path = Path(run_dir) / "config.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_yaml(cfg), encoding="utf-8")
    return path
