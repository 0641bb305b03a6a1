"""Command line: ``feds3a run | preset | validate``.

Every :class:`~feds3a.config.ExperimentConfig` field is also a flag
(``--c-fraction 0.4``); ``--set key=value`` works for any field too.
Runs are written under ``$FEDS3A_RUNS`` (default ``./runs``).

Exit codes: 0 success, 2 invalid configuration, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import yaml

from .config import FIELD_NAMES, dump_yaml, parse_and_validate, parse_override
from .errors import ConfigurationError, FedS3AError
from .presets import PRESETS, run_preset
from .protocol import run_experiment
from .report import summary_text, write_run

RUNS_ENV = "FEDS3A_RUNS"


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML file of config fields")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field (repeatable)")
    group = p.add_argument_group("config fields")
    for name in FIELD_NAMES:
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"field_{name}", metavar="VALUE",
                           help=argparse.SUPPRESS if name in ("label_column",) else None)


def _overrides(args) -> dict:
    out = {}
    for name in FIELD_NAMES:
        raw = getattr(args, f"field_{name}")
        if raw is not None:
            out[name] = yaml.safe_load(raw)
    for item in args.set:
        key, value = parse_override(item)
        out[key] = value
    return out


def _runs_root(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get(RUNS_ENV, "runs"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feds3a", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _add_config_args(run)
    run.add_argument("--name", help="run directory name (default: timestamp)")
    run.add_argument("--out", help=f"run root (default ${RUNS_ENV} or ./runs)")

    preset = sub.add_parser("preset", help="run a named sweep")
    preset.add_argument("name", help="one of: " + ", ".join(sorted(PRESETS)))
    _add_config_args(preset)
    preset.add_argument("--out", help=f"run root (default ${RUNS_ENV} or ./runs)")

    val = sub.add_parser("validate", help="check a config and print the effective values")
    _add_config_args(val)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset" and args.name not in PRESETS:
            raise ConfigurationError(
                f"unknown preset {args.name!r}; valid presets: {', '.join(sorted(PRESETS))}"
            )
        cfg = parse_and_validate(args.config, _overrides(args))
    except (ConfigurationError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "validate":
            sys.stdout.write(dump_yaml(cfg))
            return 0
        root = _runs_root(args)
        if args.command == "run":
            name = args.name or time.strftime("run-%Y%m%d-%H%M%S")
            run_dir = root / name
            result = run_experiment(cfg)
            summary = write_run(run_dir, cfg, result.trace)
            sys.stdout.write(summary_text(summary))
            print(f"wrote {run_dir}", file=sys.stderr)
            return 0
        res = run_preset(args.name, root, cfg, log=lambda m: print(m, file=sys.stderr))
        sys.stdout.write(res.table.read_text(encoding="utf-8"))
        print(f"wrote {res.table}", file=sys.stderr)
        return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FedS3AError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
