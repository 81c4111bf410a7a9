"""Run every config in scripts/configs and print the resulting curves.

Usage::

    python scripts/reproduce_curves.py [config.ini ...]

CSVs land in scripts/results/ (the ``output`` key of each config). The
exit code is the largest one returned by the individual runs.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from robust_selftest import cli

HERE = Path(__file__).resolve().parent


def show(path: Path) -> None:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'value':>12} {'bound':>12}  status")
    for r in rows:
        print(f"{float(r['functional_value']):12.6f} {float(r['bound']):12.6f}  {r['status']}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    args = ap.parse_args(argv)
    configs = args.configs or sorted((HERE / "configs").glob("*.ini"))
    worst = 0
    for path in configs:
        print(f"== {path.name}")
        code = cli.run(path)
        worst = max(worst, code)
        if code != 1:
            show(cli.load_config(path).output)
    return worst


if __name__ == "__main__":
    sys.exit(main())
