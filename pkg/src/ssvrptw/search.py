"""First-stage optimization.

``local_search`` is a simulated-annealing descent over nine neighbourhoods
(four route moves, five waiting-time moves).  After a rejected candidate
the next neighbourhood is tried; after an accepted one the search starts
again from the first.  ``scheduled_search`` chains several such runs on
progressively finer time scales and waiting-time grids.  ``solve_exact``
enumerates every first-stage solution of a tiny instance.

Searches run on a coarsened copy of the instance (``scale``); waiting-time
multiples are given in original time units.  Whatever the search strategy,
the reported cost is the customer-chaining recourse cost of the rescaled
solution on the original instance.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .assign import assign
from .expect import evaluate
from .model import (
    BudgetExceeded,
    ConfigError,
    Solution,
    canonical_solution,
    is_feasible,
    rescale_solution,
    route_duration,
    scale_instance,
)
from .simulate import RINF, RQ, RQPLUS, check_strategy

HYBRID = "hybrid"
SEARCH_STRATEGIES = (RINF, RQ, RQPLUS, HYBRID)
OPERATORS = (
    "relocate",
    "swap",
    "two_opt",
    "cross_exchange",
    "insert",
    "remove",
    "increase_wait",
    "decrease_wait",
    "transfer_wait",
)


@dataclass(frozen=True)
class Phase:
    scale: int = 1
    multiple: int = 10
    fraction: float = 1.0


@dataclass
class SearchConfig:
    strategy: str = RQ
    t_init: float = 2.0
    t_min: float = 1e-6
    alpha: float = 0.95
    time_limit: float | None = None  # seconds, whole run
    iterations: int | None = 1000  # whole run
    phases: tuple = (Phase(),)
    gate: str = "next"

    def validate(self):
        if self.strategy not in SEARCH_STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not 0 < self.t_min < self.t_init:
            raise ConfigError("need 0 < t_min < t_init")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if self.time_limit is None and self.iterations is None:
            raise ConfigError("give a time limit or an iteration budget")
        if not self.phases:
            raise ConfigError("at least one phase is required")
        if abs(sum(p.fraction for p in self.phases) - 1.0) > 1e-9:
            raise ConfigError("phase fractions must sum to 1")
        for p in self.phases:
            if p.scale < 1 or p.multiple < 1 or p.multiple % p.scale:
                raise ConfigError(
                    f"waiting multiple {p.multiple} must be a positive multiple of scale {p.scale}"
                )

    @property
    def eval_strategy(self):
        return RQ if self.strategy == HYBRID else self.strategy


def parse_phases(text):
    """'5:60,2:30,1:10' -> equal-fraction phases; 'scale:multiple:fraction' also accepted."""
    items = [x for x in text.split(",") if x.strip()]
    phases = []
    for item in items:
        parts = item.split(":")
        try:
            nums = [float(x) for x in parts]
        except ValueError:
            raise ConfigError(f"bad phase {item!r}") from None
        if len(nums) == 2:
            nums.append(1.0 / len(items))
        if len(nums) != 3:
            raise ConfigError(f"bad phase {item!r}")
        phases.append(Phase(int(nums[0]), int(nums[1]), nums[2]))
    return tuple(phases)


@dataclass
class SearchResult:
    solution: Solution  # at scale 1
    cost: float  # search-strategy cost on the last phase's grid
    reported_cost: float  # customer-chaining recourse, scale 1
    iterations: int
    log: list = field(default_factory=list)


class Evaluator:
    """Cached expected-cost oracle on one (scaled) instance."""

    def __init__(self, inst, strategy, gate="next"):
        check_strategy(inst, strategy)
        self.inst, self.strategy, self.gate = inst, strategy, gate
        self.cache = {}
        self.calls = 0

    def __call__(self, sol):
        key = canonical_solution(sol).key()
        cost = self.cache.get(key)
        if cost is None:
            self.calls += 1
            asg = assign(self.inst, sol)
            cost = evaluate(self.inst, sol, self.strategy, self.gate, asg=asg).cost
            self.cache[key] = cost
        return cost


def report_cost(inst, sol, gate="next"):
    """Cost used for reporting: customer-chaining recourse at scale 1."""
    strategy = RQPLUS
    return evaluate(inst, sol, strategy, gate).cost


# ---------------------------------------------------------------------------
# initial solution and neighbourhoods


def initial_solution(inst, rng, step):
    """Random insertion of every waiting vertex, then an even split of each
    route's spare time into waiting times on the ``step`` grid.  Vertices
    that cannot get even one step are dropped, last inserted first."""
    routes = [[] for _ in range(inst.vehicles)]
    for w in inst.waiting:
        k = int(rng.integers(inst.vehicles))
        routes[k].insert(int(rng.integers(len(routes[k]) + 1)), w)
    waits = {}
    for route in routes:
        while route:
            ones = {w: 0 for w in route}
            spare = inst.horizon - 1 - route_duration(inst, route, ones)
            share = (spare // len(route)) // step * step
            if share >= step:
                waits.update({w: share for w in route})
                break
            route.pop(int(rng.integers(len(route))))
    return Solution(tuple(map(tuple, routes)), waits)


def _positions(routes):
    return [(k, i) for k, r in enumerate(routes) for i in range(len(r))]


def neighbor(op, sol, inst, rng, step):
    """Random move of kind ``op`` (1..9); None if the move class is empty.

    The candidate may be infeasible; the caller checks it.
    """
    routes = [list(r) for r in sol.routes]
    waits = dict(sol.waits)
    visited = _positions(routes)
    name = OPERATORS[op - 1]
    if name == "relocate":
        if not visited:
            return None
        k, i = visited[int(rng.integers(len(visited)))]
        w = routes[k].pop(i)
        targets = [
            (k2, j)
            for k2 in range(len(routes))
            for j in range(len(routes[k2]) + 1)
            if (k2, j) != (k, i)
        ]
        if not targets:
            return None
        k2, j = targets[int(rng.integers(len(targets)))]
        routes[k2].insert(j, w)
    elif name == "swap":
        if len(visited) < 2:
            return None
        a, b = rng.choice(len(visited), size=2, replace=False)
        (ka, ia), (kb, ib) = visited[a], visited[b]
        routes[ka][ia], routes[kb][ib] = routes[kb][ib], routes[ka][ia]
    elif name == "two_opt":
        cands = [k for k, r in enumerate(routes) if len(r) >= 2]
        if not cands:
            return None
        k = cands[int(rng.integers(len(cands)))]
        i, j = sorted(rng.choice(len(routes[k]), size=2, replace=False))
        routes[k][i : j + 1] = routes[k][i : j + 1][::-1]
    elif name == "cross_exchange":
        cands = [k for k, r in enumerate(routes) if r]
        if len(cands) < 2:
            return None
        ka, kb = rng.choice(cands, size=2, replace=False)
        ra, rb = routes[ka], routes[kb]
        ia = int(rng.integers(len(ra)))
        ja = int(rng.integers(ia, len(ra))) + 1
        ib = int(rng.integers(len(rb)))
        jb = int(rng.integers(ib, len(rb))) + 1
        routes[ka] = ra[:ia] + rb[ib:jb] + ra[ja:]
        routes[kb] = rb[:ib] + ra[ia:ja] + rb[jb:]
    elif name == "insert":
        free = [w for w in inst.waiting if w not in waits]
        if not free:
            return None
        w = free[int(rng.integers(len(free)))]
        k = int(rng.integers(len(routes)))
        routes[k].insert(int(rng.integers(len(routes[k]) + 1)), w)
        waits[w] = step
    elif name == "remove":
        if not visited:
            return None
        k, i = visited[int(rng.integers(len(visited)))]
        del waits[routes[k].pop(i)]
    elif name == "increase_wait":
        if not visited:
            return None
        k, i = visited[int(rng.integers(len(visited)))]
        waits[routes[k][i]] += step
    elif name == "decrease_wait":
        cands = [w for w in waits if waits[w] >= 2 * step]
        if not cands:
            return None
        w = cands[int(rng.integers(len(cands)))]
        waits[w] -= step
    else:  # transfer_wait
        donors = [w for w in waits if waits[w] >= 2 * step]
        if not donors or len(waits) < 2:
            return None
        a = donors[int(rng.integers(len(donors)))]
        others = [w for w in waits if w != a]
        b = others[int(rng.integers(len(others)))]
        amount = step * int(rng.integers(1, waits[a] // step))
        waits[a] -= amount
        waits[b] += amount
    cand = Solution(tuple(map(tuple, routes)), waits)
    if canonical_solution(cand).key() == canonical_solution(sol).key():
        return None  # vehicle relabelling only
    return cand


# ---------------------------------------------------------------------------
# annealing


def _regrid(sol, old_scale, phase):
    """Move a solution to a phase's scale and waiting-time grid."""
    waits = {}
    for w, tau in sol.waits.items():
        k = max(1, round(tau * old_scale / phase.multiple))
        waits[w] = k * phase.multiple // phase.scale
    return Solution(sol.routes, waits)


def _anneal(inst_s, ev, config, rng, current, budget_iter, deadline, step, phase_id, log, it0):
    cost = ev(current)
    best, best_cost = current, cost
    temp = config.t_init
    op = 1
    it = 0
    while True:
        if budget_iter is not None and it >= budget_iter:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        cand = neighbor(op, current, inst_s, rng, step)
        accepted = False
        cand_cost = None
        if cand is not None and is_feasible(inst_s, cand):
            cand_cost = ev(cand)
            if cand_cost <= cost:
                accepted = True
            else:
                accepted = rng.random() < math.exp(-(1.0 - cost / cand_cost) / temp)
        log.append(
            {
                "iter": it0 + it,
                "phase": phase_id,
                "op": op,
                "move": OPERATORS[op - 1],
                "candidate": cand_cost,
                "accepted": bool(accepted),
                "current": cand_cost if accepted else cost,
                "temperature": temp,
                "best": best_cost,
            }
        )
        if accepted:
            current, cost = cand, cand_cost
            op = 1
            if cost < best_cost:
                best, best_cost = current, cost
                log[-1]["best"] = best_cost
        else:
            op = op % len(OPERATORS) + 1
        temp *= config.alpha
        if temp < config.t_min:
            temp = config.t_init
        it += 1
    return best, best_cost, it


def scheduled_search(inst, config, seed, initial=None):
    """Run the annealing over each phase; returns a SearchResult."""
    config.validate()
    rng = np.random.default_rng(seed)
    start = time.monotonic()
    log = []
    incumbent, inc_scale = initial, 1
    total_it = 0
    best_cost = math.inf
    for pid, phase in enumerate(config.phases):
        inst_s = scale_instance(inst, phase.scale)
        step = phase.multiple // phase.scale
        ev = Evaluator(inst_s, config.eval_strategy, config.gate)
        if incumbent is None:
            current = initial_solution(inst_s, rng, step)
        else:
            current = _regrid(incumbent, inc_scale, phase)
            if not is_feasible(inst_s, current):
                log.append({"phase": pid, "event": "regrid infeasible, restarting"})
                current = initial_solution(inst_s, rng, step)
        iters = None if config.iterations is None else int(round(config.iterations * phase.fraction))
        deadline = None
        if config.time_limit is not None:
            used = sum(p.fraction for p in config.phases[: pid + 1])
            deadline = start + config.time_limit * used
        log.append({"phase": pid, "event": "start", "scale": phase.scale, "multiple": phase.multiple})
        incumbent, best_cost, n = _anneal(
            inst_s, ev, config, rng, current, iters, deadline, step, pid, log, total_it
        )
        inc_scale = phase.scale
        total_it += n
    final = rescale_solution(incumbent, inc_scale)
    return SearchResult(final, best_cost, report_cost(inst, final, config.gate), total_it, log)


def local_search(inst, config, seed, initial=None):
    """Single-phase annealing (the phase list of ``config`` is used as is)."""
    return scheduled_search(inst, config, seed, initial)


def dumps_log(log):
    return "".join(json.dumps(entry, sort_keys=True) + "\n" for entry in log)


# ---------------------------------------------------------------------------
# exact enumeration


def _route_sets(inst):
    """Canonical assignments of waiting vertices to routes.

    Yields tuples of K frozensets; route labels are broken by requiring the
    sets sorted by their sorted-tuple key (empty routes first).
    """
    W = list(inst.waiting)
    K = inst.vehicles
    for labels in itertools.product(range(K + 1), repeat=len(W)):
        sets = [[] for _ in range(K)]
        for w, lab in zip(W, labels):
            if lab:
                sets[lab - 1].append(w)
        keys = [tuple(sorted(s)) for s in sets]
        if all(_set_key(keys[k]) < _set_key(keys[k + 1]) or not keys[k] and not keys[k + 1] for k in range(K - 1)):
            yield keys


def _set_key(vertices):
    return (len(vertices) > 0, vertices)


def _wait_vectors(n, budget, step):
    """All (tau_1..tau_n) on the step grid, each >= step, summing to <= budget."""
    total = budget // step
    for ks in itertools.product(range(1, total + 1), repeat=n):
        if sum(ks) <= total:
            yield tuple(k * step for k in ks)


def _route_options(inst, vertices, step):
    """(ordering, free time) pairs for one route's vertex set."""
    out = []
    for perm in itertools.permutations(vertices):
        zero = {w: 0 for w in perm}
        budget = inst.horizon - 1 - route_duration(inst, perm, zero)
        if not perm:
            out.append(((), 0))
        elif budget >= step * len(perm):
            out.append((perm, budget))
    return out


def search_space_size(inst, step):
    total = 0
    for sets in _route_sets(inst):
        prod = 1
        for vs in sets:
            n_opts = 0
            for perm, budget in _route_options(inst, vs, step):
                n_opts += comb(budget // step, len(perm)) if perm else 1
            prod *= n_opts
        total += prod
    return total


def solve_exact(inst, strategy, step, budget=200_000, gate="next"):
    """Enumerate every first-stage solution with waiting times on the
    ``step`` grid (in instance time units).  Returns (solution, cost)."""
    check_strategy(inst, strategy)
    if step < 1:
        raise ConfigError("step must be >= 1")
    size = search_space_size(inst, step)
    if size > budget:
        raise BudgetExceeded(f"search space has {size} solutions, budget is {budget}")
    ev = Evaluator(inst, strategy, gate)
    best, best_cost = None, math.inf
    for sets in _route_sets(inst):
        per_route = []
        for vs in sets:
            opts = []
            for perm, free in _route_options(inst, vs, step):
                if not perm:
                    opts.append(((), ()))
                    continue
                for taus in _wait_vectors(len(perm), free, step):
                    opts.append((perm, taus))
            per_route.append(opts)
        for combo in itertools.product(*per_route):
            routes = tuple(perm for perm, _ in combo)
            waits = {w: t for perm, taus in combo for w, t in zip(perm, taus)}
            sol = Solution(routes, waits)
            cost = ev(sol)
            if cost < best_cost:
                best, best_cost = sol, cost
    return best, best_cost
