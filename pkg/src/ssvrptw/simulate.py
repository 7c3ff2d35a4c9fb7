"""Scenario execution of recourse strategies and the wait-and-serve policy.

``run_recourse`` replays one scenario (which potential requests appear)
against a first-stage solution.  It is written as a discrete-event
simulation of the vehicles' operational rules, independent of the
probability recursions in ``expect``; summing it over all scenarios gives
the exact expected cost used as an oracle.

Acceptance of a request is decided at its decision time: its reveal time,
or the departure time from the previous waiting vertex of the route if the
request belongs to a vertex the vehicle has not reached yet.  Within a time
unit, decisions come first (in route order) and vehicle moves second.
Capacity is checked against the load of accepted requests that precede the
request in route order.

Trace records are tuples (time, vehicle, event, subject, load).  The
subject is a vertex for moves and a request index for "accept", "reject"
and "serve"; load is None on decisions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .assign import assign
from .model import ConfigError, check_solution

RINF, RQ, RQPLUS = "rinf", "rq", "rq+"
STRATEGIES = (RINF, RQ, RQPLUS)
GATES = ("next", "literal")


class SimulationError(AssertionError):
    """An executed trace broke an operational invariant."""


@dataclass
class Outcome:
    accepted: np.ndarray  # bool per request
    appeared: np.ndarray
    trace: list = field(default_factory=list)

    @property
    def cost(self):
        return int(self.appeared.sum() - self.accepted.sum())


def check_strategy(inst, strategy):
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    if strategy == RINF and inst.capacity_binds():
        raise ConfigError("the unbounded-capacity strategy needs non-binding capacity")


class _Vehicle:
    __slots__ = ("k", "route", "j", "mode", "loc", "t", "load", "served", "ptr", "target", "dep")

    def __init__(self, k, route, t0):
        self.k = k
        self.route = route
        self.j = -1  # index of current waiting vertex, -1 before the first
        self.mode = "transit" if route else "done"
        self.loc = 0
        self.t = t0
        self.load = 0
        self.served = []
        self.ptr = 0  # requests of the current vertex before ptr are settled
        self.target = None  # projections stop when leaving for this request
        self.dep = None

    def copy(self):
        v = _Vehicle.__new__(_Vehicle)
        for name in _Vehicle.__slots__:
            setattr(v, name, getattr(self, name))
        v.served = list(self.served)
        return v


class Plan:
    """Scenario-independent data of a (instance, solution) pair."""

    def __init__(self, inst, sol, asg=None):
        if asg is None:
            check_solution(inst, sol)
            asg = assign(inst, sol)
        self.inst, self.sol, self.asg = inst, sol, asg
        self.stops = asg.stops
        self.by_vertex = asg.by_vertex
        n = len(inst.requests)
        self.route_of = [None] * n
        self.route_rank = [0] * n
        for k, lst in enumerate(asg.by_route):
            for pos, i in enumerate(lst):
                self.route_of[i] = k
                self.route_rank[i] = pos
        self.dec_time = [None] * n
        for i, w in enumerate(asg.vertex):
            if w is None:
                continue
            stop = self.stops[w]
            route = sol.routes[stop.route]
            prev_hi = self.stops[route[stop.position - 1]].on_hi if stop.position else 1
            self.dec_time[i] = max(inst.requests[i].reveal, prev_hi)
        self.order = sorted(
            (self.dec_time[i], self.route_of[i], self.route_rank[i], i)
            for i in range(n)
            if self.dec_time[i] is not None
        )
        self.demand = [r.demand for r in inst.requests]
        self.start = [self.stops[route[0]].on_lo if route else 1 for route in sol.routes]


class _Run:
    def __init__(self, plan, strategy, appeared, gate, want_trace):
        self.plan = plan
        self.inst = plan.inst
        self.asg = plan.asg
        self.stops = plan.stops
        self.strategy = strategy
        self.plus = strategy == RQPLUS
        self.gate = gate
        self.appeared = appeared.tolist() if isinstance(appeared, np.ndarray) else [bool(x) for x in appeared]
        n = len(self.appeared)
        self.accepted = [False] * n
        self.decided = [False] * n
        self.now = 0
        self.trace = [] if want_trace else None
        self.d = self.inst.travel
        self.vehicles = [
            _Vehicle(k, route, t0) for k, (route, t0) in enumerate(zip(plan.sol.routes, plan.start))
        ]

    def log(self, *event):
        if self.trace is not None:
            self.trace.append(event)

    def bounds_from(self, i, loc):
        """Departure bounds from an arbitrary location (customer chaining)."""
        r = self.inst.requests[i]
        stop = self.stops[self.asg.vertex[i]]
        d = self.d
        c = r.customer
        lo = max(stop.on_lo, r.reveal, r.early - int(d[loc, c]))
        hi = min(
            r.late - int(d[loc, c]),
            stop.next_arrival - int(d[loc, c]) - r.service - int(d[c, stop.next_vertex]),
        )
        return lo, hi

    def pending(self, v):
        """Index into the vertex list of the smallest request that is
        accepted or still unknown; requests skipped on the way are settled
        for good."""
        lst = self.plan.by_vertex[v.route[v.j]]
        acc, app, dec = self.accepted, self.appeared, self.decided
        dec_time = self.plan.dec_time
        p = v.ptr
        while p < len(lst):
            i = lst[p]
            if i == v.target or acc[i]:
                break
            if app[i]:
                if not dec[i]:
                    break
            elif dec_time[i] > self.now:
                break
            p += 1
        v.ptr = p
        return lst[p] if p < len(lst) else None

    def wake_time(self, v, limit):
        """Next time the pending set can change: an appearing request of the
        vertex gets decided."""
        lst = self.plan.by_vertex[v.route[v.j]]
        dec_time = self.plan.dec_time
        for p in range(v.ptr, len(lst)):
            i = lst[p]
            if self.appeared[i] and not self.decided[i]:
                return min(limit, dec_time[i])
        return limit

    def leave(self, v, t):
        """Head for the next stop: from the waiting vertex at its scheduled
        departure, from a customer right away (waiting there if early)."""
        stop = self.stops[v.route[v.j]]
        dist = int(self.d[v.loc, stop.next_vertex])
        if t + dist > stop.next_arrival:
            raise SimulationError(f"vehicle {v.k} cannot reach {stop.next_vertex} on time")
        go = max(t, stop.on_hi) if v.mode == "at_w" else t
        v.mode = "transit"
        v.t = go + dist if stop.next_vertex == 0 else stop.next_arrival
        self.log(go, v.k, "leave", v.loc, v.load)

    def act(self, v, t):
        """Perform the vehicle's action at time t == v.t."""
        if v.mode == "transit":
            v.j += 1
            v.ptr = 0
            if v.j >= len(v.route):
                v.mode = "done"
                v.loc = 0
                self.log(t, v.k, "depot", 0, v.load)
                return
            v.mode = "at_w"
            v.loc = v.route[v.j]
            self.log(t, v.k, "arrive", v.loc, v.load)
            return
        stop = self.stops[v.route[v.j]]
        w = stop.vertex
        i = self.pending(v)
        if i is None:
            self.leave(v, t)
            return
        if i == v.target or self.accepted[i]:
            lo = self.bounds_from(i, v.loc)[0] if self.plus else self.asg.tmin[i]
            if t < lo:
                v.t = lo
                return
            if i == v.target:
                v.dep = (t, v.loc)
                v.mode = "done"
                return
            r = self.inst.requests[i]
            c = r.customer
            arrive = t + int(self.d[v.loc, c])
            start = max(arrive, r.early)
            fin = start + r.service
            v.load += r.demand
            v.served.append(i)
            v.ptr += 1
            self.log(t, v.k, "depart", v.loc, v.load)
            self.log(start, v.k, "serve", i, v.load)
            if self.plus:
                v.mode, v.loc, v.t = "at_c", c, fin
            else:
                v.mode, v.loc, v.t = "at_w", w, fin + int(self.d[c, w])
                self.log(v.t, v.k, "arrive", w, v.load)
            return
        # the smallest candidate is still unknown
        if v.mode == "at_w":
            if t >= stop.on_hi:
                self.leave(v, t)
            else:
                v.t = self.wake_time(v, stop.on_hi)
            return
        back = t + int(self.d[v.loc, w])
        if self.gate == "next" and back <= stop.on_hi:
            self.log(t, v.k, "depart", v.loc, v.load)
            v.mode, v.loc, v.t = "at_w", w, back
            self.log(back, v.k, "arrive", w, v.load)
            return
        last = stop.next_arrival - int(self.d[v.loc, stop.next_vertex])
        if t >= last:
            self.leave(v, t)
        else:
            v.t = self.wake_time(v, last)

    def project(self, v, i):
        """Departure (time, location) towards request i if it were accepted
        now, or None if the vehicle would never leave for it."""
        clone = v.copy()
        clone.target = i
        widx = self.stops[self.asg.vertex[i]].position
        saved, self.trace = self.trace, None
        try:
            guard = 0
            while clone.mode != "done" and clone.j <= widx:
                self.act(clone, clone.t)
                guard += 1
                if guard > 100000:
                    raise SimulationError("projection did not terminate")
        finally:
            self.trace = saved
        return clone.dep

    def load_before(self, i):
        k = self.plan.route_of[i]
        lst = self.asg.by_route[k][: self.plan.route_rank[i]]
        dem = self.plan.demand
        return sum(dem[j] for j in lst if self.accepted[j])

    def decide(self, i, t):
        inst = self.inst
        self.decided[i] = True
        k = self.plan.route_of[i]
        proj = self.project(self.vehicles[k], i)
        ok = proj is not None
        if ok:
            dep, loc = proj
            hi = self.bounds_from(i, loc)[1] if self.plus else self.asg.tmax[i]
            ok = dep <= hi
        if ok and self.strategy != RINF and inst.capacity is not None:
            ok = self.load_before(i) + self.plan.demand[i] <= inst.capacity
        self.accepted[i] = ok
        self.log(t, k, "accept" if ok else "reject", i, None)

    def run(self):
        decisions = [x for x in self.plan.order if self.appeared[x[3]]]
        pos = 0
        vehicles = self.vehicles
        while True:
            t = None
            for v in vehicles:
                if v.mode != "done" and (t is None or v.t < t):
                    t = v.t
            if pos < len(decisions) and (t is None or decisions[pos][0] < t):
                t = decisions[pos][0]
            if t is None:
                break
            self.now = t
            while pos < len(decisions) and decisions[pos][0] == t:
                self.decide(decisions[pos][3], t)
                pos += 1
            for v in vehicles:
                while v.mode != "done" and v.t == t:
                    self.act(v, t)
        if self.trace is not None:
            for i, r in enumerate(self.inst.requests):
                if self.appeared[i] and self.asg.vertex[i] is None:
                    self.log(r.reveal, None, "reject", i, None)
        self.audit()

    def audit(self):
        inst = self.inst
        served = set()
        for v in self.vehicles:
            served.update(v.served)
            if inst.capacity is not None and self.strategy != RINF and v.load > inst.capacity:
                raise SimulationError(f"vehicle {v.k} exceeds capacity")
        if served != {i for i, a in enumerate(self.accepted) if a}:
            raise SimulationError("accepted and served requests differ")
        if self.trace is not None:
            for ev in self.trace:
                if ev[2] == "serve":
                    r = inst.requests[ev[3]]
                    if not r.early <= ev[0] <= r.late:
                        raise SimulationError(f"request {ev[3]} served outside its window")
                if ev[2] == "depot" and ev[0] > inst.horizon:
                    raise SimulationError("vehicle back at the depot after the horizon")


def run_recourse(inst, sol, strategy, appeared, gate="next", asg=None, trace=False):
    """Execute one scenario; ``appeared`` is a bool per request."""
    check_strategy(inst, strategy)
    if gate not in GATES:
        raise ConfigError(f"unknown gate {gate!r}")
    plan = Plan(inst, sol, asg)
    return run_plan(plan, strategy, appeared, gate, trace)


def run_plan(plan, strategy, appeared, gate="next", trace=False):
    """``run_recourse`` with the scenario-independent part precomputed."""
    run = _Run(plan, strategy, appeared, gate, trace)
    run.run()
    return Outcome(np.array(run.accepted, dtype=bool), np.asarray(appeared, dtype=bool), run.trace or [])


def exhaustive_cost(inst, sol, strategy, gate="next", max_uncertain=16):
    """Exact expected number of rejected requests by scenario enumeration."""
    check_strategy(inst, strategy)
    plan = Plan(inst, sol)
    probs = np.array([r.prob for r in inst.requests])
    uncertain = [i for i, p in enumerate(probs) if 0.0 < p < 1.0]
    if len(uncertain) > max_uncertain:
        raise ConfigError(f"{len(uncertain)} uncertain requests is too many to enumerate")
    base = probs >= 1.0
    total = 0.0
    for bits in itertools.product((False, True), repeat=len(uncertain)):
        appeared = base.copy()
        weight = 1.0
        for i, b in zip(uncertain, bits):
            appeared[i] = b
            weight *= probs[i] if b else 1.0 - probs[i]
        if weight == 0.0:
            continue
        total += weight * run_plan(plan, strategy, appeared, gate).cost
    return total


# ---------------------------------------------------------------------------
# wait-and-serve


def wait_and_serve(inst, appeared):
    """Number of rejected requests under the wait-and-serve policy.

    Vehicles idle at the depot from time 1.  An appearing request goes to
    the closest idle vehicle (ties: least load, then lowest index) that can
    start service inside the window, finish, return to the depot by h and
    respect capacity; it is rejected if none can.  After service the vehicle
    idles at the customer.
    """
    d = inst.travel
    h = inst.horizon
    cap = math.inf if inst.capacity is None else inst.capacity
    nveh = inst.vehicles
    pos = [0] * nveh
    free = [1] * nveh
    load = [0] * nveh
    rejected = 0
    for i, r in enumerate(inst.requests):
        if not appeared[i]:
            continue
        t = r.reveal
        c = r.customer
        best = None
        for k in range(nveh):
            if free[k] > t or load[k] + r.demand > cap:
                continue
            dist = int(d[pos[k], c])
            start = max(t + dist, r.early)
            if start > r.late or start + r.service + int(d[c, 0]) > h:
                continue
            key = (dist, load[k], k)
            if best is None or key < best[0]:
                best = (key, start)
        if best is None:
            rejected += 1
            continue
        k = best[0][2]
        pos[k] = c
        free[k] = best[1] + r.service
        load[k] += r.demand
    return rejected


# ---------------------------------------------------------------------------
# Monte Carlo

CHUNK = 4096


def sample_chunk(probs, seed, index, size):
    """Appearance matrix for one chunk of samples; one stream per chunk."""
    rng = np.random.default_rng([seed, index])
    return rng.random((size, len(probs))) < probs


def _chunk_costs(args):
    fn, probs, seed, index, size = args
    mat = sample_chunk(probs, seed, index, size)
    return np.array([fn(row) for row in mat], dtype=np.float64)


def monte_carlo(inst, fn, samples, seed, threads=1):
    """Mean and standard error of ``fn(appeared)`` over random scenarios.

    Results depend only on (seed, samples): chunk boundaries are fixed, so
    the thread count does not change the numbers.
    """
    if samples < 2:
        raise ConfigError("need at least two samples")
    probs = np.array([r.prob for r in inst.requests])
    jobs = []
    for index, start in enumerate(range(0, samples, CHUNK)):
        jobs.append((fn, probs, seed, index, min(CHUNK, samples - start)))
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(threads) as ex:
            parts = list(ex.map(_chunk_costs, jobs))
    else:
        parts = [_chunk_costs(job) for job in jobs]
    costs = np.concatenate(parts)
    return float(costs.mean()), float(costs.std(ddof=1) / math.sqrt(len(costs)))


class RecourseCost:
    """Picklable scenario-cost callable for a fixed solution and strategy."""

    def __init__(self, inst, sol, strategy, gate="next"):
        check_strategy(inst, strategy)
        self.plan = Plan(inst, sol)
        self.strategy, self.gate = strategy, gate

    def __call__(self, appeared):
        return run_plan(self.plan, self.strategy, appeared, self.gate).cost


class WaitAndServeCost:
    def __init__(self, inst):
        self.inst = inst

    def __call__(self, appeared):
        return wait_and_serve(self.inst, appeared)
