#!/usr/bin/env python3
"""Build a mock-backend script for offline demo runs.

For tsp, replies are construction-heuristic tours of varying quality over the
same layouts the run will generate, so the swarm visibly improves; for symreg,
replies walk a fixed expression ladder; for heuristic, replies are the seed
programs wrapped in fences.
"""

import argparse
import json
import random
from pathlib import Path

from lmpso.seeds import load_seeds
from lmpso.swarm import substream
from lmpso.tsp import format_route, generate_instance, insertion_heuristic, nearest_neighbor

SYMREG_LADDER = [
    "x0",
    "x0 + x1",
    "2*x0 + 1",
    "20 - 2*abs(x1 - 10)",
    "20 + (x0 - 3) - (abs(x1 - 10) + 0.5)",
    "20 + (x0 - 3) - ((x1 - 11)^2 / 5 + 0.1)",
]


def tsp_replies(n: int, layouts: int, seed: int) -> list:
    replies = []
    for k in range(layouts):
        inst = generate_instance(n, substream(seed, f"instance:{n}:{k}"))
        rng = substream(seed, f"mock:{n}:{k}")
        tours = [
            nearest_neighbor(inst, 0),
            insertion_heuristic(inst, "random", rng),
            insertion_heuristic(inst, "nearest"),
            insertion_heuristic(inst, "farthest"),
        ]
        replies += [f"New route: {format_route(t)}" for t in tours]
    return replies


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("kind", choices=["tsp10", "tsp20", "tsp30", "symreg", "heuristic"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--layouts", type=int, default=5)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    if args.kind.startswith("tsp"):
        n = int(args.kind[3:])
        script = {"replies": tsp_replies(n, args.layouts, args.seed), "cycle": True}
    elif args.kind == "symreg":
        script = {"replies": SYMREG_LADDER, "cycle": True}
    else:
        script = {"replies": [f"```python\n{src}```" for src in load_seeds().values()],
                  "cycle": True}

    out = Path(args.out or f"out/mock_{args.kind}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(script, indent=2) + "\n")
    print(f"wrote {out} ({len(script['replies'])} replies)")
