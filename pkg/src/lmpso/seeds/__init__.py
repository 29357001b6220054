"""Reference heuristic programs used as initial swarm positions.

Each seed is a self-contained program defining ``solve(coords) -> tour``
with the same selection and tie-breaking rules as the in-process heuristics,
so evaluator-side and in-process totals agree.
"""

from importlib import resources

SEED_NAMES = ("nn", "ni", "fi", "ri")

_FILES = {
    "nn": "nearest_neighbor.py",
    "ni": "nearest_insertion.py",
    "fi": "farthest_insertion.py",
    "ri": "random_insertion.py",
}


def load_seed(name: str) -> str:
    if name not in _FILES:
        raise KeyError(f"unknown seed {name!r}; expected one of {SEED_NAMES}")
    return resources.files(__package__).joinpath(_FILES[name]).read_text()


def load_seeds() -> dict[str, str]:
    return {name: load_seed(name) for name in SEED_NAMES}
