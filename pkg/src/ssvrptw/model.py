"""Instances, first-stage solutions, schedules and their text formats.

Time is discrete: every quantity (travel times, windows, waiting times,
reveal times) is a non-negative integer number of time units in ``[1, h]``.
Vertex 0 is the depot.  A solution departs the depot at time 1.

A potential request is a (customer, reveal time) pair that appears with a
known probability.  Requests are always kept sorted by the request order
(reveal time, then window end, then customer, then reveal time again), so a
request's position in ``Instance.requests`` is its rank in that order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INSTANCE_FORMAT = "ssvrptw-instance"
SOLUTION_FORMAT = "ssvrptw-solution"
FORMAT_VERSION = 1


class ModelError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidInstance(ModelError):
    pass


class InfeasibleSolution(ModelError):
    def __init__(self, message, violations=()):
        self.violations = list(violations) or [message]
        super().__init__(message)


class UnknownVertex(ModelError):
    """A solution names a vertex that is not a waiting vertex."""


class ParseError(ModelError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ModelError):
    pass


class BudgetExceeded(ModelError):
    pass


@dataclass(frozen=True)
class Request:
    customer: int
    reveal: int
    demand: int
    service: int
    early: int
    late: int
    prob: float

    def order_key(self):
        return (self.reveal, self.late, self.customer, self.reveal)


@dataclass(frozen=True, eq=False)
class Instance:
    """A problem instance.

    ``capacity`` is ``None`` for unbounded vehicles.  ``waiting`` and
    ``customers`` may overlap (colocated mode).
    """

    horizon: int
    vehicles: int
    capacity: int | None
    waiting: tuple
    customers: tuple
    travel: np.ndarray
    requests: tuple
    name: str = "instance"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        travel = np.asarray(self.travel, dtype=np.int64)
        travel.setflags(write=False)
        object.__setattr__(self, "travel", travel)
        reqs = tuple(sorted(self.requests, key=Request.order_key))
        object.__setattr__(self, "requests", reqs)
        object.__setattr__(self, "waiting", tuple(int(w) for w in self.waiting))
        object.__setattr__(self, "customers", tuple(int(c) for c in self.customers))
        self.validate()

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        same = (self.horizon, self.vehicles, self.capacity, self.waiting, self.customers, self.requests, self.name)
        return same == (
            other.horizon, other.vehicles, other.capacity, other.waiting, other.customers, other.requests, other.name
        ) and np.array_equal(self.travel, other.travel)

    __hash__ = None

    @property
    def n_vertices(self):
        return self.travel.shape[0]

    @property
    def unbounded(self):
        return self.capacity is None

    def validate(self):
        h = self.horizon
        if h < 1:
            raise InvalidInstance(f"horizon must be >= 1, got {h}")
        if self.vehicles < 1:
            raise InvalidInstance("at least one vehicle is required")
        if self.capacity is not None and self.capacity < 0:
            raise InvalidInstance("capacity must be non-negative")
        d = self.travel
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidInstance("travel matrix must be square")
        if (d < 0).any():
            raise InvalidInstance("travel times must be non-negative")
        if (np.diag(d) != 0).any():
            raise InvalidInstance("travel matrix diagonal must be zero")
        nv = d.shape[0]
        if len(set(self.waiting)) != len(self.waiting):
            raise InvalidInstance("duplicate waiting vertex")
        for v in self.waiting + self.customers:
            if not 0 < v < nv:
                raise InvalidInstance(f"vertex {v} outside travel matrix")
        cust = set(self.customers)
        for r in self.requests:
            key = (r.customer, r.reveal)
            if r.customer not in cust:
                raise InvalidInstance(f"request on unknown customer {r.customer}")
            if not 1 <= r.reveal <= h:
                raise InvalidInstance(f"reveal time {r.reveal} outside [1, {h}]")
            if not r.reveal <= r.early <= r.late <= h:
                raise InvalidInstance(
                    f"request {key}: need reveal <= early <= late <= horizon"
                )
            if r.demand < 0 or r.service < 0:
                raise InvalidInstance(f"request {key}: negative demand or service")
            if not 0.0 <= r.prob <= 1.0 or math.isnan(r.prob):
                raise InvalidInstance(f"request {key}: probability outside [0, 1]")

    def total_demand(self):
        return sum(r.demand for r in self.requests)

    def capacity_binds(self):
        return self.capacity is not None and self.capacity < self.total_demand()


@dataclass(frozen=True)
class Solution:
    """First-stage decision: ``routes`` lists waiting vertices per vehicle,
    ``waits`` maps each visited waiting vertex to its waiting time."""

    routes: tuple
    waits: dict

    def __post_init__(self):
        routes = tuple(tuple(int(w) for w in route) for route in self.routes)
        object.__setattr__(self, "routes", routes)
        object.__setattr__(self, "waits", {int(k): int(v) for k, v in self.waits.items()})

    def visited(self):
        return [w for route in self.routes for w in route]

    def key(self):
        return (self.routes, tuple(self.waits[w] for route in self.routes for w in route))


def route_duration(inst, route, waits):
    """Depot-to-depot travel plus waiting time of one route."""
    if not route:
        return 0
    d = inst.travel
    path = (0,) + tuple(route) + (0,)
    travel = sum(int(d[a, b]) for a, b in zip(path, path[1:]))
    return travel + sum(waits[w] for w in route)


def solution_violations(inst, sol):
    """Feasibility violations of a first stage, as a list of messages.

    A route leaves the depot at time 1 and must be back by time h.  Vertices
    that are not waiting vertices, or a wrong route count, are structural
    errors and raise UnknownVertex instead.
    """
    if len(sol.routes) != inst.vehicles:
        raise UnknownVertex(f"expected {inst.vehicles} routes, got {len(sol.routes)}")
    waiting = set(inst.waiting)
    for route in sol.routes:
        for w in route:
            if w not in waiting:
                raise UnknownVertex(f"{w} is not a waiting vertex")
    out = []
    seen = set()
    for k, route in enumerate(sol.routes):
        for w in route:
            if w in seen:
                out.append(f"waiting vertex {w} visited twice")
            seen.add(w)
            tau = sol.waits.get(w)
            if tau is None or tau < 1:
                out.append(f"waiting vertex {w} needs a waiting time >= 1")
        if all(sol.waits.get(w) is not None for w in route):
            dur = route_duration(inst, route, sol.waits)
            if dur + 1 > inst.horizon:
                out.append(f"route {k}: duration {dur} does not return to the depot by {inst.horizon}")
    extra = set(sol.waits) - seen
    if extra:
        out.append(f"waiting times given for unvisited vertices {sorted(extra)}")
    return out


def check_solution(inst, sol):
    """Raise InfeasibleSolution (listing every violation) unless ``sol`` is a
    valid first stage."""
    found = solution_violations(inst, sol)
    if found:
        raise InfeasibleSolution("; ".join(found), found)


def is_feasible(inst, sol):
    try:
        check_solution(inst, sol)
    except (InfeasibleSolution, UnknownVertex):
        return False
    return True


@dataclass(frozen=True)
class Stop:
    """Timing of one visited waiting vertex."""

    vertex: int
    route: int
    position: int
    on_lo: int  # arrival
    on_hi: int  # departure
    next_vertex: int  # following waiting vertex, 0 for the depot
    next_arrival: int  # arrival time at next_vertex (horizon for the depot)


def schedule(inst, sol):
    """Arrival and departure times of every visited waiting vertex.

    Returns a dict vertex -> Stop.  For the last vertex of a route the
    following stop is the depot, whose required arrival time is the horizon.
    """
    d = inst.travel
    stops = {}
    for k, route in enumerate(sol.routes):
        t, prev = 1, 0
        for i, w in enumerate(route):
            lo = t + int(d[prev, w])
            hi = lo + sol.waits[w]
            if i + 1 < len(route):
                nxt = route[i + 1]
                nxt_arr = hi + int(d[w, nxt])
            else:
                nxt, nxt_arr = 0, inst.horizon
            stops[w] = Stop(w, k, i, lo, hi, nxt, nxt_arr)
            t, prev = hi, w
    return stops


def _ceil_div(a, b):
    return -(-int(a) // b)


def scale_instance(inst, s):
    """Coarser time grid: every duration v becomes ceil(v / s)."""
    if s < 1:
        raise ConfigError("scale must be >= 1")
    if s == 1:
        return inst
    travel = -(-inst.travel // s)
    reqs = [
        Request(
            r.customer,
            _ceil_div(r.reveal, s),
            r.demand,
            _ceil_div(r.service, s),
            _ceil_div(r.early, s),
            _ceil_div(r.late, s),
            r.prob,
        )
        for r in inst.requests
    ]
    return Instance(
        horizon=_ceil_div(inst.horizon, s),
        vehicles=inst.vehicles,
        capacity=inst.capacity,
        waiting=inst.waiting,
        customers=inst.customers,
        travel=travel,
        requests=tuple(reqs),
        name=inst.name,
        meta={**inst.meta, "scale": s},
    )


def rescale_solution(sol, s):
    """Map a solution found at scale ``s`` back to unit time."""
    return Solution(sol.routes, {w: tau * s for w, tau in sol.waits.items()})


def canonical_solution(sol):
    """Same solution with routes sorted; route labels carry no meaning."""
    routes = sorted(sol.routes, key=lambda r: (len(r) == 0, r))
    return Solution(tuple(routes), sol.waits)


# ---------------------------------------------------------------------------
# text formats


def _fmt_prob(p):
    return repr(float(p))


def dumps_instance(inst):
    out = io.StringIO()
    w = out.write
    w(f"format {INSTANCE_FORMAT} {FORMAT_VERSION}\n")
    w(f"name {inst.name}\n")
    w(f"horizon {inst.horizon}\n")
    w(f"vehicles {inst.vehicles}\n")
    w(f"capacity {'inf' if inst.capacity is None else inst.capacity}\n")
    for key in sorted(inst.meta):
        w(f"meta {key} {inst.meta[key]}\n")
    w("waiting " + " ".join(map(str, inst.waiting)) + "\n")
    w("customers " + " ".join(map(str, inst.customers)) + "\n")
    w(f"requests {len(inst.requests)}\n")
    w("# customer reveal demand service early late prob\n")
    for r in inst.requests:
        w(
            f"{r.customer} {r.reveal} {r.demand} {r.service} {r.early} {r.late} "
            f"{_fmt_prob(r.prob)}\n"
        )
    n = inst.n_vertices
    w(f"matrix {n}\n")
    for row in inst.travel:
        w(" ".join(str(int(x)) for x in row) + "\n")
    w("end\n")
    return out.getvalue()


class _Lines:
    def __init__(self, text):
        self.items = [
            (i + 1, ln.strip())
            for i, ln in enumerate(text.splitlines())
            if ln.strip() and not ln.lstrip().startswith("#")
        ]
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            raise ParseError(f"unexpected end of file, expected {what}")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def peek(self):
        return self.items[self.pos][1] if self.pos < len(self.items) else None

    def keyword(self, key):
        lineno, text = self.next(key)
        parts = text.split()
        if parts[0] != key:
            raise ParseError(f"expected '{key}', found '{parts[0]}'", lineno)
        return lineno, parts[1:]


def _ints(parts, lineno, what):
    try:
        return [int(x) for x in parts]
    except ValueError:
        raise ParseError(f"bad integer in {what}", lineno) from None


def _header(lines, fmt):
    lineno, parts = lines.keyword("format")
    if len(parts) != 2 or parts[0] != fmt:
        raise ParseError(f"not a {fmt} file", lineno)
    if parts[1] != str(FORMAT_VERSION):
        raise ParseError(f"unsupported format version {parts[1]}", lineno)


def loads_instance(text):
    lines = _Lines(text)
    _header(lines, INSTANCE_FORMAT)
    _, parts = lines.keyword("name")
    name = " ".join(parts) or "instance"
    lineno, parts = lines.keyword("horizon")
    (horizon,) = _ints(parts, lineno, "horizon")
    lineno, parts = lines.keyword("vehicles")
    (vehicles,) = _ints(parts, lineno, "vehicles")
    lineno, parts = lines.keyword("capacity")
    capacity = None if parts == ["inf"] else _ints(parts, lineno, "capacity")[0]
    meta = {}
    while lines.peek() is not None and lines.peek().startswith("meta "):
        lineno, parts = lines.keyword("meta")
        if len(parts) < 2:
            raise ParseError("meta needs a key and a value", lineno)
        meta[parts[0]] = " ".join(parts[1:])
    lineno, parts = lines.keyword("waiting")
    waiting = _ints(parts, lineno, "waiting")
    lineno, parts = lines.keyword("customers")
    customers = _ints(parts, lineno, "customers")
    lineno, parts = lines.keyword("requests")
    (nreq,) = _ints(parts, lineno, "requests")
    reqs = []
    for _ in range(nreq):
        lineno, text = lines.next("request row")
        parts = text.split()
        if len(parts) != 7:
            raise ParseError("request rows have 7 fields", lineno)
        c, g, q, s, e, l = _ints(parts[:6], lineno, "request")
        try:
            p = float(parts[6])
        except ValueError:
            raise ParseError("bad probability", lineno) from None
        reqs.append(Request(c, g, q, s, e, l, p))
    lineno, parts = lines.keyword("matrix")
    (n,) = _ints(parts, lineno, "matrix")
    rows = []
    for _ in range(n):
        lineno, text = lines.next("matrix row")
        row = _ints(text.split(), lineno, "matrix")
        if len(row) != n:
            raise ParseError(f"matrix row has {len(row)} entries, expected {n}", lineno)
        rows.append(row)
    lines.keyword("end")
    try:
        return Instance(
            horizon=horizon,
            vehicles=vehicles,
            capacity=capacity,
            waiting=tuple(waiting),
            customers=tuple(customers),
            travel=np.array(rows, dtype=np.int64).reshape(n, n),
            requests=tuple(reqs),
            name=name,
            meta=meta,
        )
    except InvalidInstance as exc:
        raise ParseError(str(exc)) from None


def dumps_solution(sol, meta=None):
    out = io.StringIO()
    out.write(f"format {SOLUTION_FORMAT} {FORMAT_VERSION}\n")
    for key in sorted(meta or {}):
        out.write(f"meta {key} {meta[key]}\n")
    out.write(f"routes {len(sol.routes)}\n")
    for route in sol.routes:
        out.write(
            "route " + " ".join(f"{w}:{sol.waits[w]}" for w in route) + "\n"
        )
    out.write("end\n")
    return out.getvalue()


def loads_solution(text):
    """Parse a solution; returns (Solution, meta dict)."""
    lines = _Lines(text)
    _header(lines, SOLUTION_FORMAT)
    meta = {}
    while lines.peek() is not None and lines.peek().startswith("meta "):
        lineno, parts = lines.keyword("meta")
        if len(parts) < 2:
            raise ParseError("meta needs a key and a value", lineno)
        meta[parts[0]] = " ".join(parts[1:])
    lineno, parts = lines.keyword("routes")
    (k,) = _ints(parts, lineno, "routes")
    routes, waits = [], {}
    for _ in range(k):
        lineno, parts = lines.keyword("route")
        route = []
        for item in parts:
            w, sep, tau = item.partition(":")
            if not sep:
                raise ParseError("route items are vertex:wait", lineno)
            w, tau = _ints([w, tau], lineno, "route")
            if w in waits:
                raise ParseError(f"vertex {w} listed twice", lineno)
            route.append(w)
            waits[w] = tau
        routes.append(tuple(route))
    lines.keyword("end")
    return Solution(tuple(routes), waits), meta


def read_instance(path):
    return loads_instance(Path(path).read_text())


def write_instance(inst, path):
    Path(path).write_text(dumps_instance(inst))


def read_solution(path):
    return loads_solution(Path(path).read_text())


def write_solution(sol, path, meta=None):
    Path(path).write_text(dumps_solution(sol, meta))
