#!/usr/bin/env python3
"""Emit a synthetic 2-feature regression CSV shaped like the benchmark tasks:
a smooth peak in x1 with a linear x0 trend plus light noise."""

import math
import random
import sys
from pathlib import Path


def write_dataset(path, rows: int = 200, seed: int = 0) -> None:
    rng = random.Random(seed)
    lines = ["x0,x1,target"]
    for _ in range(rows):
        x0 = rng.uniform(0, 8)
        x1 = rng.uniform(5, 15)
        y = 20 + (x0 - 3) - 0.45 * ((x1 - 11) ** 2 / 5 + (x0 - 4) ** 2)
        y += 0.5 * math.sin(x1 - 10.5) + rng.gauss(0, 0.1)
        lines.append(f"{x0:.6f},{x1:.6f},{y:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
    print(f"wrote {path} ({rows} rows)")


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "out/synthetic_2d.csv"
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(target)
