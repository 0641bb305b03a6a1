"""Named experiment sweeps.  Each preset is a list of labelled config cells."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .config import ExperimentConfig, resolve
from .errors import ConfigurationError
from .protocol import run_experiment
from .report import TABLE_COLUMNS, mean_summary, table_row, write_run, write_table


def _staleness(base: ExperimentConfig):
    return [
        ("g1 constant", base.replace(staleness="constant", staleness_a=None)),
        ("g2 polynomial a=1/2", base.replace(staleness="polynomial", staleness_a=0.5)),
        ("g3 hinge a=1 b=0", base.replace(staleness="hinge", staleness_a=1.0, staleness_b=0.0)),
        ("g4 exponential a=e/2", base.replace(staleness="exponential", staleness_a=None)),
    ]


def _round_weight(base: ExperimentConfig):
    return [
        ("no adaptive lr", base.replace(adaptive_lr=False)),
        ("h1 constant", base.replace(round_weight="constant", round_weight_a=None)),
        ("h2 logarithmic", base.replace(round_weight="logarithmic", round_weight_a=None)),
        ("h3 polynomial a=1/2", base.replace(round_weight="polynomial", round_weight_a=0.5)),
        ("h4 exp-smoothing a=0.1", base.replace(round_weight="exp-smoothing", round_weight_a=0.1)),
        ("h5 exponential a=e/2", base.replace(round_weight="exponential", round_weight_a=None)),
    ]


def _tau(base: ExperimentConfig):
    return [(f"tau={t}", base.replace(tau=t)) for t in (0, 1, 2, 3, 4)]


def _c(base: ExperimentConfig):
    return [(f"C={c}", base.replace(c_fraction=c, f_beta=None)) for c in (0.1, 0.4, 0.5, 0.6, 1.0)]


def _server_size(base: ExperimentConfig):
    return [(f"server={s}", base.replace(server_fraction=s)) for s in (0.01, 0.02, 0.05, 0.1)]


def _groups(base: ExperimentConfig):
    return [
        ("|G|=1 ungrouped", base.replace(n_groups=1)),
        ("|G|=2", base.replace(n_groups=2)),
        ("|G|=3 pseudo histograms", base.replace(n_groups=3)),
        ("|G|=3 oracle histograms", base.replace(n_groups=3, histogram_source="oracle")),
    ]


def _supervised_weight(base: ExperimentConfig):
    return [
        ("f fixed 1/2", base.replace(f_mode="fixed", f_alpha=0.5)),
        ("f fixed 1/(C*M+1)", base.replace(f_mode="fixed", f_alpha=1.0 / (base.c_fraction * base.n_clients + 1))),
        ("f by data size", base.replace(f_mode="size")),
        ("f dynamic", base.replace(f_mode="dynamic")),
    ]


def _baselines(base: ExperimentConfig):
    return [(b, base.replace(baseline=b)) for b in ("feds3a", "fedavg-partial", "fedavg-all", "fedasync")]


PRESETS: dict[str, Callable[[ExperimentConfig], list]] = {
    "staleness-sweep": _staleness,
    "round-weight-sweep": _round_weight,
    "tau-sweep": _tau,
    "c-sweep": _c,
    "server-size-sweep": _server_size,
    "group-ablation": _groups,
    "supervised-weight-ablation": _supervised_weight,
    "baselines": _baselines,
}


@dataclass
class PresetResult:
    name: str
    run_dir: Path
    table: Path
    rows: list


def preset_cells(name: str, base: ExperimentConfig | None = None) -> list[tuple[str, ExperimentConfig]]:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; valid: {', '.join(sorted(PRESETS))}")
    base = base or ExperimentConfig()
    return [(label, resolve(cfg)) for label, cfg in PRESETS[name](base)]


def run_cell(cfg: ExperimentConfig, run_dir: Path) -> dict:
    """All repetitions of one config (seeds ``seed .. seed+repetitions-1``), seed-averaged."""
    summaries = []
    for rep in range(cfg.repetitions):
        rcfg = cfg.replace(seed=cfg.seed + rep)
        result = run_experiment(rcfg)
        sub = run_dir if cfg.repetitions == 1 else run_dir / f"seed-{rcfg.seed}"
        summaries.append(write_run(sub, rcfg, result.trace))
    return summaries[0] if len(summaries) == 1 else mean_summary(summaries)


def run_preset(name: str, root: str | Path, base: ExperimentConfig | None = None,
               log: Callable[[str], None] | None = None) -> PresetResult:
    cells = preset_cells(name, base)
    out = Path(root) / name
    rows = []
    for i, (label, cfg) in enumerate(cells):
        if log:
            log(f"[{i + 1}/{len(cells)}] {label}")
        summary = run_cell(cfg, out / f"cell-{i:02d}")
        rows.append(table_row(label, summary))
    table = write_table(out / "table.csv", rows, TABLE_COLUMNS)
    return PresetResult(name, out, table, rows)
