"""Traveling-salesman problem: instances, construction heuristics, an exact
small-instance solver, a swap-sequence PSO baseline, and the swarm adapter.

Distances are Euclidean on integer coordinates, computed in double precision
without rounding, so heuristic gaps stay comparable against the exact solver
under the same metric. Routes are zero-based permutations rendered as
"[c0, c1, ..., c(n-1)]" in prompts and replies.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

from .swarm import (
    Candidate,
    ConstraintViolation,
    IterationRecord,
    ParseFailure,
    ParticleEvent,
    ProblemAdapter,
    RunTrace,
    VelocityPrompt,
)

Tour = list[int]
SwapSequence = list[tuple[int, int]]

COORD_MIN, COORD_MAX = 0, 100

# Exact search is capped where the 2^n * n state table stays desk-sized.
EXACT_SOLVER_MAX_CITIES = 15


class InvalidTour(Exception):
    """The order is not a permutation of the instance's cities."""


class TooLarge(Exception):
    """Instance exceeds the exact solver's city cap."""


class MissingOptimum(Exception):
    """No reference optimum is available and the instance is too large to solve exactly."""


@dataclass
class TspInstance:
    coords: list[tuple[int, int]]
    name: str = ""
    reference_optimum: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.coords) < 2:
            raise ValueError("instance needs at least 2 cities")
        self.coords = [(int(x), int(y)) for x, y in self.coords]
        for x, y in self.coords:
            if not (COORD_MIN <= x <= COORD_MAX and COORD_MIN <= y <= COORD_MAX):
                raise ValueError(f"coordinate ({x}, {y}) outside [{COORD_MIN}, {COORD_MAX}]")

    @property
    def n(self) -> int:
        return len(self.coords)

    @cached_property
    def distance_matrix(self) -> list[list[float]]:
        n = self.n
        D = [[0.0] * n for _ in range(n)]
        for i in range(n):
            xi, yi = self.coords[i]
            for j in range(i + 1, n):
                dx = xi - self.coords[j][0]
                dy = yi - self.coords[j][1]
                d = math.sqrt(dx * dx + dy * dy)
                D[i][j] = d
                D[j][i] = d
        return D


def generate_instance(n: int, rng: random.Random, name: str = "") -> TspInstance:
    """n integer points uniform on the coordinate grid; deterministic per rng state."""
    if n < 2:
        raise ValueError("n must be >= 2")
    coords = [(rng.randint(COORD_MIN, COORD_MAX), rng.randint(COORD_MIN, COORD_MAX)) for _ in range(n)]
    return TspInstance(coords, name=name or f"random-{n}")


def validate_tour(instance: TspInstance, tour: Sequence[int]) -> None:
    if sorted(tour) != list(range(instance.n)):
        raise InvalidTour(f"not a permutation of 0..{instance.n - 1}: {list(tour)!r}")


def tour_length(instance: TspInstance, tour: Sequence[int]) -> float:
    """Cycle length: consecutive edges plus the closing edge back to the start."""
    validate_tour(instance, tour)
    D = instance.distance_matrix
    total = 0.0
    for a, b in zip(tour, list(tour[1:]) + [tour[0]]):
        total += D[a][b]
    return total


def nearest_neighbor(instance: TspInstance, start: int = 0) -> Tour:
    """Greedy tour: repeatedly move to the closest unvisited city; ties to the lowest index."""
    n = instance.n
    if not 0 <= start < n:
        raise ValueError(f"start city {start} out of range")
    D = instance.distance_matrix
    unvisited = [c for c in range(n) if c != start]
    tour = [start]
    current = start
    while unvisited:
        row = D[current]
        best = min(unvisited, key=lambda c: row[c])  # min is stable: lowest index wins ties
        tour.append(best)
        unvisited.remove(best)
        current = best
    return tour


def _cheapest_insertion_slot(D: list[list[float]], tour: Tour, city: int) -> int:
    """Index at which inserting `city` minimizes the cyclic length increase; leftmost wins ties."""
    best_pos, best_inc = 1, math.inf
    for k in range(len(tour)):
        a = tour[k]
        b = tour[(k + 1) % len(tour)]
        inc = D[a][city] + D[city][b] - D[a][b]
        if inc < best_inc:
            best_inc = inc
            best_pos = k + 1
    return best_pos


def insertion_heuristic(instance: TspInstance, mode: str, rng: Optional[random.Random] = None) -> Tour:
    """Nearest / farthest / random insertion.

    Starts from the mode-matching city pair, then repeatedly selects the
    unvisited city closest to / farthest from / at random relative to the
    partial tour (distance to the tour = min over tour cities) and inserts it
    where the length increase is smallest. Ties go to the lowest city index
    and the leftmost slot.
    """
    if mode not in ("nearest", "farthest", "random"):
        raise ValueError(f"mode must be nearest|farthest|random, got {mode!r}")
    n = instance.n
    if n == 2:
        return [0, 1]
    D = instance.distance_matrix

    if mode == "random":
        if rng is None:
            raise ValueError("random mode needs an rng")
        i = rng.randrange(n)
        j = rng.randrange(n)
        while j == i:
            j = rng.randrange(n)
        first, second = i, j
    else:
        # min/max return the first extremal pair, so lexicographic iteration
        # order bakes in the lowest-index tie rule
        pick_extreme = min if mode == "nearest" else max
        first, second = pick_extreme(
            ((i, j) for i in range(n) for j in range(i + 1, n)),
            key=lambda p: D[p[0]][p[1]],
        )

    tour = [first, second]
    unvisited = [c for c in range(n) if c not in (first, second)]
    # distance from each unvisited city to the partial tour
    to_tour = {c: min(D[c][first], D[c][second]) for c in unvisited}

    while unvisited:
        if mode == "nearest":
            city = min(unvisited, key=lambda c: to_tour[c])
        elif mode == "farthest":
            city = max(unvisited, key=lambda c: to_tour[c])
        else:
            city = unvisited[rng.randrange(len(unvisited))]
        tour.insert(_cheapest_insertion_slot(D, tour, city), city)
        unvisited.remove(city)
        del to_tour[city]
        for c in unvisited:
            if D[c][city] < to_tour[c]:
                to_tour[c] = D[c][city]
    return tour


def held_karp(instance: TspInstance) -> tuple[float, Tour]:
    """Exact minimum cycle via dynamic programming over city subsets.

    Raises TooLarge beyond the configured cap; memory grows as 2^n * n.
    """
    n = instance.n
    if n > EXACT_SOLVER_MAX_CITIES:
        raise TooLarge(f"exact solver capped at {EXACT_SOLVER_MAX_CITIES} cities, got {n}")
    D = instance.distance_matrix
    full = 1 << n
    INF = math.inf
    dp = [[INF] * n for _ in range(full)]
    parent = [[-1] * n for _ in range(full)]
    dp[1][0] = 0.0

    for mask in range(1, full, 2):  # odd masks: tours anchored at city 0
        row = dp[mask]
        for last in range(n):
            cost = row[last]
            if cost == INF or not (mask >> last) & 1:
                continue
            Dlast = D[last]
            for nxt in range(1, n):
                if (mask >> nxt) & 1:
                    continue
                nm = mask | (1 << nxt)
                nc = cost + Dlast[nxt]
                if nc < dp[nm][nxt]:
                    dp[nm][nxt] = nc
                    parent[nm][nxt] = last

    full_mask = full - 1
    best, best_last = INF, 1
    for last in range(1, n):
        total = dp[full_mask][last] + D[last][0]
        if total < best:
            best, best_last = total, last

    order: Tour = []
    mask, last = full_mask, best_last
    while last != -1:
        order.append(last)
        prev = parent[mask][last]
        mask ^= 1 << last
        last = prev
    order.reverse()
    return best, order


def optimality_gap(length: float, optimum: float) -> float:
    """(length - optimum) / optimum as a fraction; multiply by 100 to report percent."""
    if optimum <= 0:
        raise ValueError("optimum must be positive")
    if length < optimum - 1e-9:
        raise ValueError(f"length {length} below the claimed optimum {optimum}")
    return (length - optimum) / optimum


def gap_percent(length: float, optimum: float) -> float:
    return 100.0 * optimality_gap(length, optimum)


def resolve_optimum(instance: TspInstance) -> float:
    """Reference optimum if supplied, else the exact solver for small instances."""
    if instance.reference_optimum is not None:
        return instance.reference_optimum
    if instance.n <= EXACT_SOLVER_MAX_CITIES:
        return held_karp(instance)[0]
    raise MissingOptimum(
        f"{instance.name or 'instance'}: n={instance.n} exceeds the exact solver "
        "and no reference optimum was supplied"
    )


# ---------------------------------------------------------------------------
# Swap-sequence PSO baseline


def diff(target: Sequence[int], base: Sequence[int]) -> SwapSequence:
    """Swap sequence Q with apply_swaps(Q, base) == target."""
    if sorted(target) != sorted(base):
        raise ValueError("permutations must be over the same elements")
    cur = list(base)
    pos = {city: idx for idx, city in enumerate(cur)}
    swaps: SwapSequence = []
    for k, want in enumerate(target):
        if cur[k] != want:
            l = pos[want]
            swaps.append((k, l))
            pos[cur[k]], pos[cur[l]] = l, k
            cur[k], cur[l] = cur[l], cur[k]
    return swaps


def apply_swaps(swaps: SwapSequence, perm: Sequence[int]) -> list[int]:
    out = list(perm)
    for i, j in swaps:
        out[i], out[j] = out[j], out[i]
    return out


def _keep_with_prob(swaps: SwapSequence, prob: float, rng: random.Random) -> SwapSequence:
    return [s for s in swaps if rng.random() < prob]


def swap_pso(
    instance: TspInstance,
    num_particles: int,
    iterations: int,
    rng: random.Random,
    alpha: float = 0.5,
    beta: float = 0.5,
    velocity_cap: Optional[int] = None,
) -> tuple[Tour, RunTrace]:
    """Classical discrete PSO over permutations with swap-sequence velocities.

    v' = truncate(v) + keep(alpha, diff(pbest, x)) + keep(beta, diff(gbest, x));
    x' = apply(v', x). The truncation cap defaults to n swaps.
    """
    if num_particles < 1 or iterations < 1:
        raise ValueError("num_particles and iterations must be >= 1")
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ValueError("alpha and beta must lie in [0, 1]")
    n = instance.n
    cap = n if velocity_cap is None else velocity_cap

    positions: list[Tour] = []
    for _ in range(num_particles):
        p = list(range(n))
        rng.shuffle(p)
        positions.append(p)
    velocities: list[SwapSequence] = [[] for _ in range(num_particles)]
    scores = [tour_length(instance, p) for p in positions]
    pbest = [list(p) for p in positions]
    pbest_scores = list(scores)
    g = min(range(num_particles), key=lambda i: pbest_scores[i])
    gbest, gbest_score = list(pbest[g]), pbest_scores[g]

    trace = RunTrace()
    for t in range(1, iterations + 1):
        events = []
        for i in range(num_particles):
            if scores[i] < pbest_scores[i]:
                pbest[i] = list(positions[i])
                pbest_scores[i] = scores[i]
                if pbest_scores[i] < gbest_score:
                    gbest, gbest_score = list(pbest[i]), pbest_scores[i]
            v = velocities[i][:cap]
            v = v + _keep_with_prob(diff(pbest[i], positions[i]), alpha, rng)
            v = v + _keep_with_prob(diff(gbest, positions[i]), beta, rng)
            positions[i] = apply_swaps(v, positions[i])
            velocities[i] = v
            scores[i] = tour_length(instance, positions[i])
            events.append(ParticleEvent(i, "accepted", 0))
        trace.per_iteration.append(IterationRecord(t, gbest_score, format_route(gbest), tuple(events)))

    for i in range(num_particles):  # final positions were scored but not folded in yet
        if scores[i] < gbest_score:
            gbest, gbest_score = list(positions[i]), scores[i]
    return gbest, trace


# ---------------------------------------------------------------------------
# Swarm adapter


def format_route(tour: Sequence[int]) -> str:
    return "[" + ", ".join(str(c) for c in tour) + "]"


_BRACKETED = re.compile(r"\[([^\[\]]*)\]")
_INT_LIST = re.compile(r"^\s*-?\d+\s*(,\s*-?\d+\s*)*$")

VELOCITY_TEMPLATE = (
    "Your best route so far is {pbest} (length {pbest_len:.2f}). "
    "The best route found by the swarm is {gbest} (length {gbest_len:.2f}). "
    "Generate a new route that is influenced by both and shorter than your current route."
)


class TspAdapter(ProblemAdapter):
    """Presents a TSP instance to the swarm; routes travel as bracketed index lists."""

    def __init__(self, instance: TspInstance, velocity_template: str = VELOCITY_TEMPLATE):
        self.instance = instance
        self.velocity_template = velocity_template

    def describe(self) -> str:
        cities = "\n".join(f"{i}: ({x}, {y})" for i, (x, y) in enumerate(self.instance.coords))
        return (
            "You are solving a Traveling Salesman Problem. Find the route that visits "
            "every city exactly once and returns to the start with minimal total "
            f"Euclidean distance. The cities and their (x, y) coordinates are:\n{cities}\n"
            "Always answer with a route over all city indices formatted as a bracketed "
            "list, for example " + format_route(list(range(self.instance.n))) + "."
        )

    def initial_position(self, rng: random.Random) -> Candidate:
        order = list(range(self.instance.n))
        rng.shuffle(order)
        return Candidate(text=format_route(order), decoded=order,
                         score=tour_length(self.instance, order))

    def construct_velocity(self, pbest: Candidate, gbest: Candidate) -> VelocityPrompt:
        return VelocityPrompt(self.velocity_template.format(
            pbest=format_route(pbest.decoded), pbest_len=pbest.score,
            gbest=format_route(gbest.decoded), gbest_len=gbest.score,
        ))

    def format_position(self, candidate: Candidate) -> str:
        return format_route(candidate.decoded)

    def parse_and_validate(self, text: str) -> Tour:
        lists = [m.group(1) for m in _BRACKETED.finditer(text) if _INT_LIST.match(m.group(1))]
        if not lists:
            raise ParseFailure("no bracketed integer list in reply")
        order = [int(tok) for tok in lists[-1].split(",")]
        if sorted(order) != list(range(self.instance.n)):
            raise ConstraintViolation(f"not a permutation of 0..{self.instance.n - 1}: {order!r}")
        return order

    def evaluate(self, decoded: Tour) -> float:
        return tour_length(self.instance, decoded)


def tsp_adapter(instance: TspInstance) -> TspAdapter:
    return TspAdapter(instance)


# ---------------------------------------------------------------------------
# Instance files: plain text ("n", then "x y" lines, optional "OPT <real>")
# and a JSON form {name, coords, opt}.


def instance_to_json(instance: TspInstance) -> dict:
    return {
        "name": instance.name,
        "coords": [[x, y] for x, y in instance.coords],
        "opt": instance.reference_optimum,
    }


def instance_from_json(obj: dict) -> TspInstance:
    return TspInstance(
        coords=[(x, y) for x, y in obj["coords"]],
        name=obj.get("name", ""),
        reference_optimum=obj.get("opt"),
    )


def dumps_instance_text(instance: TspInstance) -> str:
    lines = [str(instance.n)]
    lines += [f"{x} {y}" for x, y in instance.coords]
    if instance.reference_optimum is not None:
        lines.append(f"OPT {instance.reference_optimum!r}")
    return "\n".join(lines) + "\n"


def parse_instance_text(text: str, name: str = "") -> TspInstance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty instance file")
    n = int(lines[0])
    if len(lines) < n + 1:
        raise ValueError(f"expected {n} coordinate lines, found {len(lines) - 1}")
    coords = []
    for ln in lines[1:n + 1]:
        x, y = ln.split()
        coords.append((int(x), int(y)))
    opt = None
    for ln in lines[n + 1:]:
        if ln.upper().startswith("OPT"):
            opt = float(ln.split()[1])
    return TspInstance(coords, name=name, reference_optimum=opt)


def load_instance(path) -> TspInstance:
    with open(path) as fh:
        text = fh.read()
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    if text.lstrip().startswith("{"):
        obj = json.loads(text)
        obj.setdefault("name", name)
        return instance_from_json(obj)
    return parse_instance_text(text, name=name)


def save_instance(path, instance: TspInstance) -> None:
    text = str(path)
    with open(path, "w") as fh:
        if text.endswith(".json"):
            json.dump(instance_to_json(instance), fh)
            fh.write("\n")
        else:
            fh.write(dumps_instance_text(instance))
