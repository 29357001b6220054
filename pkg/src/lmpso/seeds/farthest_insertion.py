import math


def solve(coords):
    """Farthest insertion: grow the tour from the farthest city pair, always
    inserting the unvisited city farthest from the tour at the cheapest slot."""
    n = len(coords)

    def dist(a, b):
        dx = coords[a][0] - coords[b][0]
        dy = coords[a][1] - coords[b][1]
        return math.sqrt(dx * dx + dy * dy)

    if n == 2:
        return [0, 1]

    first, second = max(
        ((i, j) for i in range(n) for j in range(i + 1, n)),
        key=lambda p: dist(p[0], p[1]),
    )
    tour = [first, second]
    unvisited = [c for c in range(n) if c not in (first, second)]
    to_tour = {c: min(dist(c, first), dist(c, second)) for c in unvisited}

    while unvisited:
        city = max(unvisited, key=lambda c: to_tour[c])
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
        del to_tour[city]
        for c in unvisited:
            d = dist(c, city)
            if d < to_tour[c]:
                to_tour[c] = d
    return tour
