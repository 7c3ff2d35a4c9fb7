import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvrptw.assign import assign, round_trip, service_bounds
from ssvrptw.model import Instance, Request, Solution, schedule
from tiny import random_solution, tiny_instance


def star(n_wait=2, h=30, dist=1):
    """Depot 0, waiting vertices 1..n_wait, one customer; all distances ``dist``."""
    nv = n_wait + 2
    d = np.full((nv, nv), dist)
    np.fill_diagonal(d, 0)
    return d, tuple(range(1, n_wait + 1)), (nv - 1,)


def test_bounds_substitution():
    d = np.array([[0, 2, 5], [2, 0, 1], [5, 1, 0]])
    r = Request(2, 1, 1, 0, 5, 5, 0.5)
    inst = Instance(20, 1, None, (1,), (2,), d, (r,))
    stop = schedule(inst, Solution(((1,),), {1: 6}))[1]
    assert (stop.on_lo, stop.on_hi) == (3, 9)
    assert service_bounds(inst, stop, r) == (4, 4)
    assert round_trip(inst, 1, r) == 2


def test_window_closed_before_reachable():
    d = np.array([[0, 2, 5], [2, 0, 3], [5, 3, 0]])
    r = Request(2, 1, 1, 0, 1, 4, 0.5)  # l < on_lo + d(w, c) = 3 + 3
    inst = Instance(20, 1, None, (1,), (2,), d, (r,))
    asg = assign(inst, Solution(((1,),), {1: 6}))
    assert asg.vertex == [None] and asg.unassigned() == [0]


def test_no_visited_vertex():
    d, W, C = star()
    inst = Instance(30, 1, None, W, C, d, (Request(C[0], 3, 1, 0, 3, 9, 0.5),))
    asg = assign(inst, Solution(((),), {}))
    assert asg.unassigned() == [0] and asg.by_route == [[]]


def test_same_vertex_in_request_order():
    d, W, C = star(1)
    reqs = (Request(C[0], 6, 1, 0, 6, 12, 0.5), Request(C[0], 4, 1, 0, 4, 20, 0.5))
    inst = Instance(30, 1, None, W, C, d, reqs)
    asg = assign(inst, Solution(((1,),), {1: 20}))
    assert asg.by_vertex[1] == [0, 1]
    assert [inst.requests[i].reveal for i in asg.by_vertex[1]] == [4, 6]
    assert asg.first(1) == 0 and asg.previous(1) == 0 and asg.previous(0) is None


def test_balancing_prefers_fewer_requests():
    d, W, C = star(2)
    c = C[0]
    reqs = tuple(Request(c, g, 1, 0, g, g + 2, 0.5) for g in (3, 4, 5)) + (Request(c, 6, 1, 0, 6, 7, 0.5),)
    inst = Instance(40, 2, None, W, C, d, reqs)
    # both vertices are on duty from 2; vertex 1 until 8, vertex 2 until 30
    asg = assign(inst, Solution(((1,), (2,)), {1: 6, 2: 28}))
    # tie -> 1, then 2 (fewer), tie -> 1, then 2 (1 has two, 2 has one)
    assert asg.vertex == [1, 2, 1, 2]


def test_tie_goes_to_smaller_id():
    d, W, C = star(2)
    inst = Instance(40, 2, None, W, C, d, (Request(C[0], 4, 1, 0, 4, 30, 0.5),))
    asg = assign(inst, Solution(((2,), (1,)), {1: 20, 2: 20}))
    assert asg.vertex == [1]
    assert asg.by_route == [[], [0]]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_assignment_invariants(seed):
    rng = np.random.default_rng(seed)
    inst = tiny_instance(rng)
    sol = random_solution(inst, rng)
    asg = assign(inst, sol)
    assert asg == assign(inst, sol)
    d = inst.travel
    flat = sorted(i for lst in asg.by_route for i in lst)
    assert sorted(flat + asg.unassigned()) == list(range(len(inst.requests)))
    for w, lst in asg.by_vertex.items():
        assert lst == sorted(lst)
    for i, w in enumerate(asg.vertex):
        if w is None:
            continue
        r, stop = inst.requests[i], asg.stops[w]
        lo, hi = asg.tmin[i], asg.tmax[i]
        assert stop.on_lo <= lo <= hi
        assert hi <= stop.on_hi - round_trip(inst, w, r)
        assert lo >= r.reveal and lo + d[w, r.customer] >= r.early
        assert hi + d[w, r.customer] <= r.late
    for k, route in enumerate(sol.routes):
        expected = [i for w in route for i in asg.by_vertex[w]]
        assert asg.by_route[k] == expected
