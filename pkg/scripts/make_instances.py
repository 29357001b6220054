#!/usr/bin/env python3
"""Generate instance files for a given size and seed range, appending exact
OPT lines where the solver can reach them (n <= 15)."""

import argparse
import random
from pathlib import Path

from lmpso.tsp import EXACT_SOLVER_MAX_CITIES, dumps_instance_text, generate_instance, held_karp

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--count", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/instances")
    args = ap.parse_args()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        inst = generate_instance(args.n, random.Random(args.seed * 1000 + k),
                                 name=f"n{args.n}-{k}")
        if args.n <= EXACT_SOLVER_MAX_CITIES:
            inst.reference_optimum = held_karp(inst)[0]
        path = outdir / f"{inst.name}.tsp"
        path.write_text(dumps_instance_text(inst))
        print(f"wrote {path}")
