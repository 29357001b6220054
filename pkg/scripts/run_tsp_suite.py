#!/usr/bin/env python3
"""Run the three TSP experiment sizes from their checked-in configs.

Needs a chat endpoint (LMPSO_API_BASE etc.); pass --mock-script to replay a
scripted run instead. The 20- and 30-city configs report raw lengths; add OPT
lines to instance files (see make_instances.py) to report gaps there.
"""

import sys
from pathlib import Path

from lmpso.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:]
    for kind in ("tsp10", "tsp20", "tsp30"):
        rc = main(["tsp", "--kind", kind, "--config", str(ROOT / "configs" / f"{kind}.json"),
                   *extra])
        if rc != 0:
            sys.exit(rc)
