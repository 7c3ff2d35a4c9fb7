"""Static assignment of potential requests to waiting vertices.

Each request is given to at most one visited waiting vertex, chosen among
those from which it could be served when the vehicle is idle there: the
vertex with the fewest requests assigned so far wins, ties going to the
smallest vertex id.  Requests that no vertex can serve stay unassigned and
are always rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import schedule


def service_bounds(inst, stop, r):
    """Earliest and latest departure from ``stop`` to serve request ``r``."""
    d = inst.travel
    w, c = stop.vertex, r.customer
    lo = max(stop.on_lo, r.reveal, r.early - int(d[w, c]))
    hi = min(
        r.late - int(d[w, c]),
        stop.on_hi - int(d[w, c]) - r.service - int(d[c, w]),
    )
    return lo, hi


def round_trip(inst, w, r):
    d = inst.travel
    return int(d[w, r.customer]) + r.service + int(d[r.customer, w])


@dataclass
class Assignment:
    """Result of the assignment.

    ``vertex[i]`` is the waiting vertex of request i (None if unassigned).
    ``by_vertex[w]`` lists request indices at w in request order.
    ``by_route[k]`` lists request indices of route k following the route's
    vertex order, then request order within a vertex.
    """

    stops: dict
    vertex: list
    by_vertex: dict
    by_route: list
    tmin: dict
    tmax: dict

    def unassigned(self):
        return [i for i, w in enumerate(self.vertex) if w is None]

    def first(self, w):
        lst = self.by_vertex.get(w, [])
        return lst[0] if lst else None

    def previous(self, i):
        """Request preceding i at the same vertex, or None."""
        w = self.vertex[i]
        if w is None:
            return None
        lst = self.by_vertex[w]
        pos = lst.index(i)
        return lst[pos - 1] if pos > 0 else None


def assign(inst, sol, stops=None):
    stops = schedule(inst, sol) if stops is None else stops
    order = sorted(stops)  # tie-break on vertex id
    counts = {w: 0 for w in order}
    vertex = [None] * len(inst.requests)
    by_vertex = {w: [] for w in order}
    tmin, tmax = {}, {}
    for i, r in enumerate(inst.requests):
        best = None
        for w in order:
            lo, hi = service_bounds(inst, stops[w], r)
            if lo <= hi and (best is None or counts[w] < counts[best]):
                best = w
        if best is None:
            continue
        lo, hi = service_bounds(inst, stops[best], r)
        vertex[i] = best
        counts[best] += 1
        by_vertex[best].append(i)
        tmin[i], tmax[i] = lo, hi
    by_route = [
        [i for w in route for i in by_vertex[w]] for route in sol.routes
    ]
    return Assignment(stops, vertex, by_vertex, by_route, tmin, tmax)
