import math
import random


def solve(coords):
    """Random insertion: pick unvisited cities in random order, inserting each
    at the cheapest slot. Seeded internally so results are reproducible."""
    rng = random.Random(0)
    n = len(coords)

    def dist(a, b):
        dx = coords[a][0] - coords[b][0]
        dy = coords[a][1] - coords[b][1]
        return math.sqrt(dx * dx + dy * dy)

    if n == 2:
        return [0, 1]

    first = rng.randrange(n)
    second = rng.randrange(n)
    while second == first:
        second = rng.randrange(n)
    tour = [first, second]
    unvisited = [c for c in range(n) if c not in (first, second)]

    while unvisited:
        city = unvisited[rng.randrange(len(unvisited))]
        best_pos, best_inc = 1, float("inf")
        for k in range(len(tour)):
            a = tour[k]
            b = tour[(k + 1) % len(tour)]
            inc = dist(a, city) + dist(city, b) - dist(a, b)
            if inc < best_inc:
                best_inc = inc
                best_pos = k + 1
        tour.insert(best_pos, city)
        unvisited.remove(city)
    return tour
