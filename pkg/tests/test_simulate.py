import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvrptw.expect import expected_cost
from ssvrptw.model import ConfigError, Instance, Request, Solution
from ssvrptw.simulate import (
    RINF,
    RQ,
    RQPLUS,
    RecourseCost,
    WaitAndServeCost,
    exhaustive_cost,
    monte_carlo,
    run_recourse,
    sample_chunk,
    wait_and_serve,
)
from tiny import random_solution, tiny_instance


def one_vertex(requests, capacity=None, h=30, tau=15, dist=1):
    d = np.full((3, 3), dist)
    np.fill_diagonal(d, 0)
    inst = Instance(h, 1, capacity, (1,), (2,), d, tuple(requests))
    return inst, Solution(((1,),), {1: tau})


def all_appear(inst):
    return np.ones(len(inst.requests), dtype=bool)


class TestSampling:
    def test_extremes(self):
        assert not sample_chunk(np.zeros(4), 1, 0, 100).any()
        assert sample_chunk(np.ones(4), 1, 0, 100).all()

    def test_frequency(self):
        mat = np.concatenate([sample_chunk(np.array([0.3]), 7, i, 4096) for i in range(25)])
        assert abs(mat.mean() - 0.3) < 0.01

    def test_chunks_are_independent_streams(self):
        a = sample_chunk(np.full(5, 0.5), 3, 0, 64)
        b = sample_chunk(np.full(5, 0.5), 3, 1, 64)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, sample_chunk(np.full(5, 0.5), 3, 0, 64))


class TestRecourse:
    def test_empty_scenario_follows_plan(self):
        d = np.array([[0, 2, 3, 1], [2, 0, 1, 1], [3, 1, 0, 1], [1, 1, 1, 0]])
        inst = Instance(30, 1, None, (1, 2), (3,), d, (Request(3, 4, 1, 0, 4, 9, 0.5),))
        sol = Solution(((1, 2),), {1: 4, 2: 5})
        out = run_recourse(inst, sol, RQ, np.zeros(1, dtype=bool), trace=True)
        assert out.cost == 0
        moves = [(t, ev, v) for t, k, ev, v, _ in out.trace]
        assert moves == [(3, "arrive", 1), (7, "leave", 1), (8, "arrive", 2), (13, "leave", 2), (16, "depot", 0)]

    def test_hand_executed_chain(self):
        # second request must leave by 4 but the vehicle is back at 6;
        # third may leave from 5 and goes at 6
        reqs = [
            Request(2, 2, 1, 2, 2, 10, 1.0),
            Request(2, 3, 1, 0, 3, 5, 1.0),
            Request(2, 4, 1, 1, 6, 12, 1.0),
        ]
        inst, sol = one_vertex(reqs)
        out = run_recourse(inst, sol, RINF, all_appear(inst), trace=True)
        assert list(out.accepted) == [True, False, True]
        assert out.cost == 1
        serves = [(t, i) for t, _, ev, i, _ in out.trace if ev == "serve"]
        assert serves == [(3, 0), (7, 2)]

    def test_capacity_in_route_order(self):
        reqs = [Request(2, 2, 1, 0, 2, 20, 1.0), Request(2, 3, 1, 0, 3, 20, 1.0)]
        inst, sol = one_vertex(reqs, capacity=1)
        assert list(run_recourse(inst, sol, RQ, all_appear(inst)).accepted) == [True, False]
        assert list(run_recourse(inst, sol, RQ, np.array([False, True])).accepted) == [False, True]

    def test_unknown_strategy(self):
        inst, sol = one_vertex([])
        with pytest.raises(ConfigError):
            run_recourse(inst, sol, "greedy", np.zeros(0, dtype=bool))

    def test_infeasible_requests_add_up(self):
        reqs = [Request(2, 2, 1, 0, 2, 3, 0.3), Request(2, 5, 1, 0, 5, 6, 0.45)]
        inst, _ = one_vertex(reqs)
        empty = Solution(((),), {})
        assert exhaustive_cost(inst, empty, RQ) == pytest.approx(0.75, abs=1e-15)

    def test_enumeration_guard(self):
        reqs = [Request(2, g, 1, 0, g, 29, 0.5) for g in range(1, 20)]
        inst, sol = one_vertex(reqs)
        with pytest.raises(ConfigError):
            exhaustive_cost(inst, sol, RINF, max_uncertain=16)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([RQ, RQPLUS]))
    def test_trace_is_valid(self, seed, strategy):
        rng = np.random.default_rng(seed)
        inst = tiny_instance(rng)
        sol = random_solution(inst, rng)
        appeared = rng.random(len(inst.requests)) < 0.7
        out = run_recourse(inst, sol, strategy, appeared, trace=True)
        again = run_recourse(inst, sol, strategy, appeared, trace=True)
        assert out.trace == again.trace
        assert not (out.accepted & ~appeared).any()
        served = {i for _, _, ev, i, _ in out.trace if ev == "serve"}
        assert served == set(np.flatnonzero(out.accepted))
        for t, k, ev, i, load in out.trace:
            if ev == "serve":
                r = inst.requests[i]
                assert r.early <= t <= r.late
            if load is not None and inst.capacity is not None:
                assert load <= inst.capacity
            if ev == "depot":
                assert t <= inst.horizon


class TestWaitAndServe:
    def grid(self, h=30, vehicles=1, capacity=None, requests=()):
        d = np.array([[0, 2, 5], [2, 0, 4], [5, 4, 0]])
        return Instance(h, vehicles, capacity, (1,), (1, 2), d, tuple(requests))

    def test_empty(self):
        inst = self.grid()
        assert wait_and_serve(inst, np.zeros(0, dtype=bool)) == 0

    def test_reachable(self):
        inst = self.grid(requests=[Request(1, 3, 1, 2, 3, 6, 1.0)])
        assert wait_and_serve(inst, all_appear(inst)) == 0

    def test_no_return_by_horizon(self):
        # reach at 3 + 2 = 5, serve until 7, back at depot at 9 > 8
        inst = self.grid(h=8, requests=[Request(1, 3, 1, 2, 3, 6, 1.0)])
        assert wait_and_serve(inst, all_appear(inst)) == 1

    def test_busy_vehicle_rejects(self):
        reqs = [Request(1, 3, 1, 4, 3, 10, 1.0), Request(2, 4, 1, 0, 4, 30, 1.0)]
        inst = self.grid(requests=reqs)
        assert wait_and_serve(inst, all_appear(inst)) == 1
        inst2 = self.grid(vehicles=2, requests=reqs)
        assert wait_and_serve(inst2, all_appear(inst2)) == 0

    def test_capacity(self):
        reqs = [Request(1, 3, 1, 0, 3, 10, 1.0), Request(2, 20, 1, 0, 20, 30, 1.0)]
        inst = self.grid(capacity=1, requests=reqs)
        assert wait_and_serve(inst, all_appear(inst)) == 1


class TestMonteCarlo:
    def test_no_requests_appear(self):
        inst, sol = one_vertex([Request(2, 3, 1, 0, 3, 9, 0.0)])
        assert monte_carlo(inst, RecourseCost(inst, sol, RQ), 100, seed=1) == (0.0, 0.0)

    def test_threads_do_not_change_results(self):
        rng = np.random.default_rng(11)
        inst = tiny_instance(rng, nreq=8)
        fn = WaitAndServeCost(inst)
        one = monte_carlo(inst, fn, 9000, seed=5, threads=1)
        two = monte_carlo(inst, fn, 9000, seed=5, threads=2)
        assert one == two

    def test_close_to_closed_form(self):
        rng = np.random.default_rng(3)
        inst = tiny_instance(rng, nreq=10, h=20)
        sol = random_solution(inst, rng)
        mean, se = monte_carlo(inst, RecourseCost(inst, sol, RQ), 20_000, seed=2)
        assert abs(mean - expected_cost(inst, sol, RQ)) <= 4 * se + 1e-12

    def test_needs_two_samples(self):
        inst, sol = one_vertex([])
        with pytest.raises(ConfigError):
            monte_carlo(inst, WaitAndServeCost(inst), 1, seed=0)
