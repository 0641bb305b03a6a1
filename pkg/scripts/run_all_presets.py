"""Run every named sweep and collect the comparison tables under one root.

Usage: python scripts/run_all_presets.py [out_dir] [key=value ...]
"""

import sys
from pathlib import Path

from feds3a.config import parse_and_validate, parse_override
from feds3a.presets import PRESETS, run_preset


def main() -> None:
    args = sys.argv[1:]
    root = Path(args.pop(0)) if args and "=" not in args[0] else Path("runs")
    base = parse_and_validate(overrides=dict(parse_override(a) for a in args))
    for name in PRESETS:
        res = run_preset(name, root, base, log=lambda m, n=name: print(f"{n} {m}", flush=True))
        print(res.table.read_text())


if __name__ == "__main__":
    main()
