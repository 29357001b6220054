#!/usr/bin/env python3
"""Run the heuristic-improvement experiment from its checked-in config.

Requires the sandbox evaluator package (see evaluator/) next to this repo
checkout; the config launches it as a subprocess. Use --seeds-only for an
LLM-free dry run that just scores the four seed heuristics.
"""

import sys
from pathlib import Path

from lmpso.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main(["heuristic", "--config", str(ROOT / "configs" / "heuristic.json"),
                   *sys.argv[1:]]))
