import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from assoc_clt.blocking import (
    ScheduleError,
    build_schedule,
    choose_p,
    corridor_variance_bound,
    partition,
)
from assoc_clt.covariance import PowerCovariance, ProductPowerCovariance, iid_model, set_variance_bruteforce
from assoc_clt.lattice import Box, box_points, dyadic
from assoc_clt.slowvar import SlowVaryFn, constant, kx_function

from conftest import random_finite_model


@pytest.fixture(scope="module")
def kx_schedule():
    return build_schedule(kx_function(PowerCovariance(1, 1.0)))


def plan_strategy(max_d=3, max_n=12):
    def build(d):
        return st.lists(
            st.integers(1, max_n).flatmap(
                lambda n: st.integers(1, n).flatmap(
                    lambda p: st.integers(1, p).map(lambda q: (n, p, q)))),
            min_size=d, max_size=d)
    return st.integers(1, max_d).flatmap(build)


def check_geometry(plan):
    n = plan.n
    whole = Box.of_size(n)
    cover = np.zeros(tuple(n), dtype=int)
    for b in plan.blocks:
        assert b.shape == tuple(plan.p)
        assert whole.contains_box(b)
        cover[whole.local_slices(b)] += 1
    assert cover.max(initial=0) <= 1
    assert np.array_equal(cover == 0, plan.corridor_indicator)
    assert plan.union_cardinality + plan.corridor_cardinality == math.prod(n)
    assert plan.m_lower <= plan.block_count <= plan.m_upper
    assert plan.corridor_cardinality <= plan.corridor_bound


class TestPartition:
    def test_d1_example(self):
        plan = partition((10,), (3,), (1,))
        assert [b.lower for b in plan.blocks] == [(0,), (4,)]
        assert plan.j_set == [(1,), (2,)]
        assert plan.block_count == 2 and plan.m_counts == (2,)
        assert plan.corridor_cardinality == 4
        assert plan.corridor_points().ravel().tolist() == [4, 8, 9, 10]
        assert plan.m_lower == 2 and plan.m_upper == 3
        check_geometry(plan)

    def test_d2_example(self):
        plan = partition((10, 10), (3, 3), (1, 1))
        assert plan.block_count == 4
        assert plan.corridor_cardinality == 64
        check_geometry(plan)

    def test_single_block(self):
        plan = partition((5,), (5,), (1,))
        assert plan.block_count == 1
        assert plan.blocks[0] == Box.of_size((5,))
        assert plan.corridor_cardinality == 0

    def test_to_dict(self):
        d = partition((10,), (3,), (1,)).to_dict()
        assert d == {"n": [10], "p": [3], "q": [1], "m_counts": [2], "block_count": 2,
                     "corridor_cardinality": 4,
                     "bounds": {"m_lower": 2, "m_upper": 3, "corridor_bound": 6}}

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            partition((10,), (3,), (4,))
        with pytest.raises(ValueError):
            partition((10,), (11,), (1,))

    @settings(max_examples=200, deadline=None)
    @given(plan_strategy())
    def test_random_geometry(self, triples):
        n, p, q = zip(*triples)
        check_geometry(partition(n, p, q))


class TestChooseP:
    def test_examples(self):
        assert choose_p((100,), (1,)) == (10,)
        p = choose_p((10**6,), (100,))
        assert p == (10**4,)
        assert 100 / p[0] == 0.01 and p[0] / 10**6 == 0.01
        assert choose_p((7, 9), (7, 9)) == (7, 9)

    @given(st.integers(1, 10**9).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))))
    def test_between_q_and_n(self, nq):
        n, q = nq
        (p,) = choose_p((n,), (q,))
        assert q <= p <= n


class TestSchedule:
    def test_constant_L(self):
        s = build_schedule(constant(1))
        assert all(v == (1,) for v in s.N0_seq)
        for j in range(1, 21):
            n = 2**j
            assert s.q_of((n,)) == (max(n // s.shrink_factor(0, n), math.floor(math.log(n)), 1),)
        assert s.q_of((1,)) == (1,)

    def test_harmonic_construction(self, kx_schedule):
        assert kx_schedule.R_seq[:2] == [(2,), (4,)]
        assert kx_schedule.N0_seq[0] == (1,)
        assert kx_schedule.M0_seq[0] == (1,)
        # M_0(r+1) = (M_0(r) v N_0(R(r+1))) + 1
        for a, n0, b in zip(kx_schedule.M0_seq, kx_schedule.N0_seq[1:], kx_schedule.M0_seq[1:]):
            assert b == tuple(max(x, y) + 1 for x, y in zip(a, n0))

    def test_q_within_n(self, kx_schedule):
        for (n,) in dyadic(0, 20):
            (q,) = kx_schedule.q_of((n,))
            assert 1 <= q <= n

    def test_limits_along_dyadic_grid(self, kx_schedule):
        L = kx_schedule.L
        qs = [kx_schedule.q_of(n)[0] for n in dyadic(8, 20)]
        frac = [q / 2**j for q, j in zip(qs, range(8, 21))]
        assert all(b >= a for a, b in zip(qs, qs[1:]))
        assert qs[-1] > qs[0]
        assert all(b <= a for a, b in zip(frac, frac[1:]))
        # stated target; the construction yields about 1.110
        assert L((2**20,)) / L((qs[-1],)) <= 1.1

    def test_log_function_example(self):
        L = SlowVaryFn(lambda n: math.log(max(n[0], 2)), 1, "lattice", "log")
        s = build_schedule(L)
        qs = [s.q_of(n)[0] for n in dyadic(8, 20)]
        assert all(b / 2 ** (j + 1) <= a / 2**j for j, (a, b) in enumerate(zip(qs, qs[1:]), 8))
        # stated target; the construction yields about 1.111
        assert L((2**20,)) / L((qs[-1],)) <= 1.05

    def test_epsilon_piecewise_constant(self, kx_schedule):
        M0 = [m[0] for m in kx_schedule.M0_seq]
        for r, (lo, R) in enumerate(zip(M0, kx_schedule.R_seq)):
            hi = M0[r + 1] if r + 1 < len(M0) else kx_schedule.cap
            for j in {lo, (lo + hi) // 2, hi - 1}:
                assert kx_schedule.epsilon(0, j) == 1 / R[0]

    def test_beyond_cap(self):
        s = build_schedule(constant(1), cap=2**10)
        with pytest.raises(ScheduleError):
            s.q_of((2**11,))

    def test_explicit_R_seq_validated(self):
        with pytest.raises(ScheduleError):
            build_schedule(constant(1), [(4,), (2,)])

    def test_unreachable_threshold(self):
        # L(n) = n is not slowly varying: L(n)/L(n/R) = R never approaches 1
        with pytest.raises(ScheduleError):
            build_schedule(SlowVaryFn(lambda n: float(n[0]), 1, "lattice"), cap=2**12)

    def test_d2_schedule(self):
        s = build_schedule(kx_function(ProductPowerCovariance(2, 1.0)), cap=2**12)
        q = s.q_of((256, 64))
        assert all(1 <= a <= b for a, b in zip(q, (256, 64)))


class TestCorridorBound:
    def test_empty(self):
        cb = corridor_variance_bound(partition((5,), (5,), (1,)), iid_model(1))
        assert cb.bound == cb.exact == 0.0

    def test_ma1_example(self, ma1):
        cb = corridor_variance_bound(partition((10,), (3,), (1,)), ma1)
        assert cb.bound == 16.0 and cb.exact == 12.0

    def test_iid_equality(self):
        plan = partition((9, 7), (3, 2), (2, 1))
        cb = corridor_variance_bound(plan, iid_model(2, 1.5))
        assert cb.exact == cb.bound == plan.corridor_cardinality * 1.5

    def test_large_plan_uses_lag_counts(self):
        model = PowerCovariance(1, 1.0)
        plan = partition((20000,), (140,), (20,))
        cb = corridor_variance_bound(plan, model)
        small = partition((2000,), (40,), (5,))
        cs = corridor_variance_bound(small, model)
        assert cs.exact == pytest.approx(set_variance_bruteforce(model, small.corridor_points()))
        assert 0 < cb.exact <= cb.bound

    def test_randomized_small_plans(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 3))
            model = random_finite_model(rng, d)
            n = tuple(int(v) for v in rng.integers(2, 13, size=d))
            p = tuple(int(rng.integers(1, v + 1)) for v in n)
            q = tuple(int(rng.integers(1, v + 1)) for v in p)
            cb = corridor_variance_bound(partition(n, p, q), model)
            assert cb.exact <= cb.bound * (1 + 1e-12)

    def test_ratio_decreases_along_schedule(self, kx_schedule):
        model = PowerCovariance(1, 1.0)
        ratios = []
        for n in dyadic(8, 20):
            q = kx_schedule.q_of(n)
            ratios.append(corridor_variance_bound(partition(n, choose_p(n, q), q), model).ratio_to_total)
        tail = ratios[len(ratios) // 2:]
        assert all(b <= a for a, b in zip(tail, tail[1:]))
