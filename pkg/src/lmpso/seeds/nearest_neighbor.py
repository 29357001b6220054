import math


def solve(coords):
    """Nearest neighbor: always move to the closest unvisited city."""
    n = len(coords)

    def dist(a, b):
        dx = coords[a][0] - coords[b][0]
        dy = coords[a][1] - coords[b][1]
        return math.sqrt(dx * dx + dy * dy)

    start = 0
    tour = [start]
    unvisited = [c for c in range(n) if c != start]
    current = start
    while unvisited:
        best = min(unvisited, key=lambda c: dist(current, c))
        tour.append(best)
        unvisited.remove(best)
        current = best
    return tour
