#!/usr/bin/env python3
"""Run the symbolic-regression experiment from its checked-in config.

Generates the synthetic 2D dataset first if it is missing; point the config's
"dataset" at any benchmark CSV (header row, last column target) for real tasks.
"""

import sys
from pathlib import Path

from lmpso.cli import main
from make_synthetic_dataset import write_dataset

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    default_data = ROOT / "out" / "synthetic_2d.csv"
    if not default_data.exists():
        default_data.parent.mkdir(parents=True, exist_ok=True)
        write_dataset(default_data)
    sys.exit(main(["symreg", "--config", str(ROOT / "configs" / "symreg.json"),
                   *sys.argv[1:]]))
