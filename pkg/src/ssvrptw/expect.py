"""Closed-form expected cost of a first-stage solution.

The expected cost is the expected number of rejected requests,
``sum_r p_r - sum_r P(r accepted)``.  Acceptance probabilities come from
forward recursions over the vehicle's state just before each request is
considered:

* ``rinf``: per waiting vertex, the law of the time at which the vehicle is
  available for the request (``f``), together with the departure law when
  the request appears (``g1``) and the discard law when it does not
  (``g2``).
* ``rq``: the same arrays with a load index, chained along each route so
  the load reached at one vertex carries over to the next.
* ``rq+``: the availability law also carries the vehicle's location, which
  is the waiting vertex or the customer of an earlier request at that
  vertex.

All arrays are indexed by absolute time ``0..T-1``.  Each request costs
O(T * loads * locations) work; ``cells`` counts the array entries updated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assign import assign, round_trip
from .model import ConfigError, check_solution
from .simulate import GATES, RINF, RQ, check_strategy


@dataclass
class Evaluation:
    cost: float
    accept: np.ndarray  # acceptance probability per request
    cells: int
    tables: dict = field(default_factory=dict)


def _time_size(inst):
    d = inst.travel
    extra = int(d.max()) if d.size else 0
    serv = max((r.service for r in inst.requests), default=0)
    return inst.horizon + 2 * extra + serv + 2


def _lump(F, at, scale):
    """``scale * F`` with all mass at times <= ``at`` moved to ``at``."""
    G = np.zeros_like(F)
    G[at + 1 :] = scale * F[at + 1 :]
    G[at] = scale * F[: at + 1].sum(axis=0)
    return G


def rinf_tables(inst, asg, keep=False):
    """Acceptance probabilities when capacity never binds.

    Each visited waiting vertex is independent: the vehicle is there from
    ``on_lo`` to ``on_hi`` whatever happened before.
    """
    T = _time_size(inst)
    accept = np.zeros(len(inst.requests))
    cells = 0
    tables = {}
    for w, chain in asg.by_vertex.items():
        stop = asg.stops[w]
        f = np.zeros(T)
        f[stop.on_lo] = 1.0
        for i in chain:
            r = inst.requests[i]
            p = r.prob
            tmin, tmax = asg.tmin[i], asg.tmax[i]
            S = round_trip(inst, w, r)
            if keep:
                tables[i] = f.copy()
            g1 = _lump(f, tmin, p)
            g2 = _lump(f, max(stop.on_lo, r.reveal), 1.0 - p)
            accept[i] = g1[tmin : tmax + 1].sum()
            nxt = g2
            nxt[tmin + S : tmax + S + 1] += g1[tmin : tmax + 1]
            nxt[tmax + 1 :] += g1[tmax + 1 :]
            f = nxt
            cells += T
    return accept, cells, tables


def _load_bins(inst):
    return 1 if inst.capacity is None else inst.capacity + 1


def rq_tables(inst, sol, asg, keep=False):
    """Acceptance probabilities with a vehicle capacity.

    ``F[t, q]`` is the probability that the vehicle is available at its
    waiting vertex at time t with load q when the next request is looked
    at.  A request refused for lack of capacity leaves the vehicle where it
    was, so that mass keeps its time.
    """
    T = _time_size(inst)
    Qb = _load_bins(inst)
    cap = inst.capacity
    loads = np.arange(Qb)
    accept = np.zeros(len(inst.requests))
    cells = 0
    tables = {}
    for route in sol.routes:
        L = np.zeros(Qb)
        L[0] = 1.0
        for w in route:
            chain = asg.by_vertex[w]
            if not chain:
                continue
            stop = asg.stops[w]
            F = np.zeros((T, Qb))
            F[stop.on_lo] = L
            for i in chain:
                r = inst.requests[i]
                p = r.prob
                tmin, tmax = asg.tmin[i], asg.tmax[i]
                S = round_trip(inst, w, r)
                if keep:
                    tables[i] = F.copy()
                fits = np.ones(Qb, bool) if cap is None else loads + r.demand <= cap
                shift = 0 if cap is None else r.demand
                g1 = _lump(F, tmin, p)
                nxt = _lump(F, max(stop.on_lo, r.reveal), 1.0 - p)
                ok = g1[tmin : tmax + 1][:, fits]
                accept[i] = ok.sum()
                nfit = int(fits.sum())
                nxt[tmin + S : tmax + S + 1, shift : shift + nfit] += ok
                refused = p * F
                refused[: tmax + 1, fits] = 0.0
                nxt += refused
                F = nxt
                cells += T * Qb
            L = F.sum(axis=0)
    return accept, cells, tables


def rqplus_tables(inst, sol, asg, gate="next", keep=False):
    """Acceptance probabilities when the vehicle may chain customers.

    ``F[v, t, q]``: the vehicle is available at time t with load q, located
    at the waiting vertex (v = 0) or at the customer of the v-th request of
    the vertex (v >= 1).  After a service the vehicle heads back to the
    waiting vertex only if the next request of the vertex is still unknown
    and it can be back before the scheduled departure; otherwise it stays
    put.  With ``gate="literal"`` it always stays.
    """
    if gate not in GATES:
        raise ConfigError(f"unknown gate {gate!r}")
    T = _time_size(inst)
    Qb = _load_bins(inst)
    cap = inst.capacity
    loads = np.arange(Qb)
    d = inst.travel
    reqs = inst.requests
    accept = np.zeros(len(reqs))
    cells = 0
    tables = {}
    for route in sol.routes:
        L = np.zeros(Qb)
        L[0] = 1.0
        for w in route:
            chain = asg.by_vertex[w]
            if not chain:
                continue
            stop = asg.stops[w]
            sv, arr = stop.next_vertex, stop.next_arrival
            n = len(chain)
            locs = [w] + [reqs[i].customer for i in chain]
            F = np.zeros((n + 1, T, Qb))
            F[0, stop.on_lo] = L
            for idx, i in enumerate(chain):
                r = reqs[i]
                p = r.prob
                c = r.customer
                if keep:
                    tables[i] = F[: idx + 1].copy()
                if gate == "next" and idx + 1 < n:
                    reveal_next = reqs[chain[idx + 1]].reveal
                else:
                    reveal_next = None
                fits = np.ones(Qb, bool) if cap is None else loads + r.demand <= cap
                shift = 0 if cap is None else r.demand
                nfit = int(fits.sum())
                nxt = np.zeros_like(F)
                for v in range(idx + 1):
                    Fv = F[v]
                    cells += T * Qb
                    lv = locs[v]
                    dv = int(d[lv, c])
                    tmin = max(stop.on_lo, r.reveal, r.early - dv)
                    tmax = min(r.late - dv, arr - dv - r.service - int(d[c, sv]))
                    if v > 0 and r.reveal > arr - int(d[lv, sv]):
                        tmax = -1  # the vehicle has already left for the next stop
                    # served from lv
                    if tmin <= tmax:
                        g1 = _lump(Fv, tmin, p)
                        ok = g1[tmin : tmax + 1][:, fits]
                        accept[i] += ok.sum()
                        fin0 = tmin + dv + r.service
                        back = _back_until(reveal_next, stop.on_hi, int(d[c, w]))
                        # fins fin0 .. fin0 + len(ok) - 1; the first ones go back
                        nb = max(0, min(len(ok), back - fin0 + 1))
                        if nb:
                            t0 = fin0 + int(d[c, w])
                            nxt[0, t0 : t0 + nb, shift : shift + nfit] += ok[:nb]
                        if nb < len(ok):
                            nxt[idx + 1, fin0 + nb : fin0 + len(ok), shift : shift + nfit] += ok[nb:]
                        refused = p * Fv
                        refused[: tmax + 1, fits] = 0.0
                    else:
                        refused = p * Fv
                    # refused or absent: the vehicle stays and learns at max(t, reveal)
                    gone = _lump(refused + (1.0 - p) * Fv, r.reveal, 1.0)
                    if v == 0:
                        nxt[0] += gone
                        continue
                    back = _back_until(reveal_next, stop.on_hi, int(d[lv, w]))
                    if back >= 0:
                        dw = int(d[lv, w])
                        nb = min(T, back + 1)
                        nxt[0, dw : nb + dw] += gone[:nb]
                        nxt[v, nb:] += gone[nb:]
                    else:
                        nxt[v] += gone
                F = nxt
            L = F.sum(axis=(0, 1))
    return accept, cells, tables


def _back_until(reveal_next, on_hi, dist):
    """Latest time from which the vehicle heads back to the waiting vertex
    (-1 if never): the next request must be unknown then, and the return
    must be over by the scheduled departure."""
    if reveal_next is None:
        return -1
    return min(reveal_next - 1, on_hi - dist)


def evaluate(inst, sol, strategy, gate="next", asg=None, keep=False):
    check_strategy(inst, strategy)
    if asg is None:
        check_solution(inst, sol)
        asg = assign(inst, sol)
    if strategy == RINF:
        accept, cells, tables = rinf_tables(inst, asg, keep)
    elif strategy == RQ:
        accept, cells, tables = rq_tables(inst, sol, asg, keep)
    else:
        accept, cells, tables = rqplus_tables(inst, sol, asg, gate, keep)
    probs = np.array([r.prob for r in inst.requests])
    cost = float(probs.sum() - accept.sum())
    return Evaluation(cost, accept, cells, tables)


def expected_cost(inst, sol, strategy, gate="next"):
    return evaluate(inst, sol, strategy, gate).cost


def load_marginals(inst, sol, asg=None):
    """Load law seen by each request under ``rq``: request -> array over q."""
    if asg is None:
        asg = assign(inst, sol)
    _, _, tables = rq_tables(inst, sol, asg, keep=True)
    return {i: F.sum(axis=0) for i, F in tables.items()}


def chain_marginals(inst, sol):
    """Load law per request for a unit-demand chain at one waiting vertex.

    Every request must be assigned to the same vertex; the law then obeys
    ``m[r][q] = p * m[prv][q - 1] + (1 - p) * m[prv][q]``.
    """
    if inst.capacity is None:
        raise ConfigError("the load law needs a finite capacity")
    if any(r.demand != 1 for r in inst.requests):
        raise ConfigError("chain marginals need unit demands")
    asg = assign(inst, sol)
    used = {w for w in asg.vertex}
    if len(used) != 1 or None in used:
        raise ConfigError("every request must be assigned to one common waiting vertex")
    return load_marginals(inst, sol, asg)
