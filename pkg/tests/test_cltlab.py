import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from assoc_clt.blocking import build_schedule, choose_p, partition
from assoc_clt.cltlab import (
    CONSISTENT,
    EXACT,
    INCONCLUSIVE,
    INCONSISTENT,
    K_NORM,
    CltReport,
    NormalizationSpec,
    UiTable,
    cf_distance,
    gaussian_tail,
    ks_normal,
    normalized_sums,
    q_certificate,
    run_clt,
    clt_verdict,
    ui_diagnostic,
    ui_table,
)
from assoc_clt.covariance import PowerCovariance, k_ball_euclid, k_ball_sup, k_rect, variance_exact
from assoc_clt.lattice import Box
from assoc_clt.fields import make_gaussian, make_iid, make_moving_average
from assoc_clt.slowvar import kx_function
from assoc_clt.testing import ConstantField

MA1 = make_moving_average(1, {(0,): 1.0, (1,): 1.0})


def normal_quantiles(N):
    return stats.norm.ppf((np.arange(1, N + 1) - 0.5) / N)


class TestKs:
    def test_quantile_set(self):
        assert ks_normal(normal_quantiles(1000), 1.0) == pytest.approx(1 / 2000, rel=1e-9)

    def test_point_mass(self):
        assert ks_normal(np.zeros(100), 1.0) == 0.5

    def test_scaling_invariance(self, rng):
        x = rng.standard_normal(500) * 1.3
        assert ks_normal(x * math.sqrt(2.5), 2.5) == pytest.approx(ks_normal(x, 1.0), abs=1e-12)

    def test_matches_scipy(self, rng):
        x = rng.standard_t(5, size=777)
        assert ks_normal(x, 1.0) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)


class TestCf:
    def test_t_zero(self):
        assert cf_distance(normal_quantiles(10**4), [0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_point_mass(self):
        assert cf_distance(np.zeros(10), [1.0]) == pytest.approx(1 - math.exp(-0.5))

    def test_quantiles_close(self):
        assert cf_distance(normal_quantiles(10**4), [0.5, 1, 2]) < 0.03


class TestNormalizedSums:
    def test_iid_exact_normal(self):
        y = normalized_sums(make_iid(1, 1.0, "normal"), (64,), EXACT, 10**4, 1)
        assert ks_normal(y) < 0.02

    def test_single_site(self):
        s = make_iid(1, 4.0, "normal")
        y = normalized_sums(s, (1,), EXACT, 10, 3)
        raw = s.box_sums(Box.of_size((1,)), 3, 10)
        assert np.allclose(y, raw / 2.0)

    def test_ma1_k_normalization(self):
        n = 4096
        y = normalized_sums(MA1, (n,), K_NORM, 4000, 5)
        target = (4 * n - 2) / (4 * n)
        assert target == pytest.approx(variance_exact(MA1.model, (n,)) / (n * 4))
        assert np.var(y, ddof=1) == pytest.approx(target, abs=5 * math.sqrt(2 / 4000))

    @pytest.mark.parametrize("sampler", [make_iid(2, 1.0, "uniform"), MA1,
                                         make_gaussian(PowerCovariance(1, 1.0), (4096,))])
    def test_exact_mode_unit_variance(self, sampler):
        N = 2000
        n = (16,) * sampler.dimension
        y = normalized_sums(sampler, n, EXACT, N, 21)
        assert abs(np.var(y, ddof=1) - 1) <= 5 * math.sqrt(2 / N)

    def test_modes_differ_by_exact_factor(self):
        s = make_gaussian(PowerCovariance(1, 1.0), (4096,))
        n = (512,)
        ex = normalized_sums(s, n, EXACT, 200, 4)
        kn = normalized_sums(s, n, K_NORM, 200, 4)
        factor = math.sqrt(variance_exact(s.model, n) / (512 * k_rect(s.model, n)))
        assert np.allclose(kn, ex * factor, rtol=4e-16, atol=0)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            NormalizationSpec("bogus")


class TestUi:
    def test_bounded_uniform_tail_zero(self):
        s = make_iid(1, 1.0, "uniform")
        t = ui_diagnostic(s, [(1,)], [3.5], 2000, 1)
        assert t.tails[0, 0] == 0.0

    def test_gaussian_c0(self):
        s = make_gaussian(PowerCovariance(1, 1.0), (4096,))
        t = ui_diagnostic(s, [(256,)], [0.0], 4000, 2)
        ratio = variance_exact(s.model, (256,)) / (256 * k_rect(s.model, (256,)))
        assert ratio <= 1
        assert t.tails[0, 0] == pytest.approx(ratio, abs=5 * ratio * math.sqrt(2 / 4000))

    def test_gaussian_slow_grid(self):
        s = make_gaussian(PowerCovariance(1, 1.0), (2**15,))
        t = ui_diagnostic(s, [(2**j,) for j in range(8, 14)], [2, 4, 8], 2000, 3)
        sup = t.sup
        assert sup[0] > sup[1] > sup[2]
        assert sup[2] < 0.05

    @settings(max_examples=50)
    @given(st.integers(0, 2**31), st.lists(st.floats(0, 20), min_size=1, max_size=6, unique=True))
    def test_nonincreasing_in_c(self, seed, cs):
        y = np.random.default_rng(seed).standard_t(3, size=300)
        row = ui_table({(8,): y}, sorted(cs)).tails[0]
        assert all(b <= a for a, b in zip(row, row[1:]))

    def test_gaussian_tail_formula(self):
        z = normal_quantiles(200000)
        assert gaussian_tail(8.0) == pytest.approx(np.mean(np.where(z * z >= 8, z * z, 0)), rel=1e-3)
        assert gaussian_tail(0.0, 0.7) == pytest.approx(0.7)

    def test_rejects_unsorted_c(self):
        with pytest.raises(ValueError):
            ui_table({(1,): np.ones(3)}, [4, 2])


class TestCertificate:
    def test_ma1_q2_zero(self):
        plan = partition((4096,), (64,), (2,))
        c = q_certificate(MA1, plan, 1.0, 0.1, 500, 1)
        assert c.q2_bound == 0.0

    def test_q1_small_example(self):
        c = q_certificate(MA1, partition((10,), (3,), (1,)), 1.0, 0.1, 200, 1)
        assert c.q1_bound == pytest.approx(math.sqrt(0.4))

    def test_bounded_lindeberg_exactly_zero(self):
        s = make_iid(1, 1.0, "uniform")
        n, p = 2**12, 2**6
        eps = 2.0
        assert eps**2 * n * 1.0 > (p * s.bound) ** 2
        c = q_certificate(s, partition((n,), (p,), (8,)), 1.0, eps, 500, 2)
        assert c.lindeberg_sum == 0.0
        small = q_certificate(s, partition((n,), (p,), (8,)), 1.0, 0.01, 500, 2)
        assert small.lindeberg_sum > 0

    def test_lindeberg_shrinks_with_n(self):
        s = make_iid(1, 1.0, "normal")
        vals = [q_certificate(s, partition((n,), (16,), (2,)), 1.0, 0.1, 1000, 3).lindeberg_sum
                for n in (256, 4096, 65536)]
        assert vals[0] > vals[1] > vals[2]

    def test_q2_nonincreasing_in_q(self):
        s = make_gaussian(PowerCovariance(1, 1.0), (2**14,))
        n = (2048,)
        q2 = [q_certificate(s, partition(n, (512,), (q,)), 1.0, 0.1, 10, 1).q2_bound
              for q in (1, 4, 16, 64, 256)]
        assert all(b <= a for a, b in zip(q2, q2[1:]))

    def test_q1_along_schedule(self):
        model = PowerCovariance(1, 1.0)
        s = make_gaussian(model, (2**16,))
        sched = build_schedule(kx_function(model))
        q1 = []
        for j in range(8, 15):
            n = (2**j,)
            q = sched.q_of(n)
            q1.append(q_certificate(s, partition(n, choose_p(n, q), q), 1.0, 0.1, 10, 1).q1_bound)
        # the factor R = 4 stays in force up to the cap, so q/n = 1/4 and q1
        # plateaus at sqrt(1/2) from n = 2^11 on
        tail = q1[3:]
        assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))

    def test_monotonicity_guard(self, monkeypatch):
        from assoc_clt import cltlab

        monkeypatch.setattr(cltlab, "k_rect", lambda m, n: float(n[0] == 1) + 1.0)
        with pytest.raises(RuntimeError):
            cltlab.q_certificate(MA1, partition((10,), (3,), (1,)), 1.0)


def test_cube_normalizers_contained():
    model = PowerCovariance(2, 2.0)
    for r in (1, 4, 16, 64):
        rx = k_ball_sup(model, r)
        assert k_ball_euclid(model, r) <= rx <= k_ball_euclid(model, math.ceil(r * math.sqrt(2))) * (1 + 1e-12)
        assert rx == k_rect(model, (r, r))


class TestVerdict:
    def test_iid_consistent(self):
        rep = run_clt(make_iid(1, 1.0, "normal"), [(1024,), (4096,)], EXACT, 10**4, 20240601)
        v = clt_verdict(rep)
        assert v.status == CONSISTENT
        assert "finite-sample" in v.text

    def test_constant_inconsistent(self):
        rep = run_clt(ConstantField(1), [(64,), (256,)], EXACT, 1000, 1)
        assert clt_verdict(rep).status == INCONSISTENT

    def test_empty_ui_inconclusive(self):
        rep = run_clt(make_iid(1, 1.0, "normal"), [(16,)], EXACT, 200, 1)
        rep.ui_table = UiTable([], [2.0, 4.0], np.empty((0, 2)))
        assert clt_verdict(rep).status == INCONCLUSIVE

    def test_report_shape(self):
        model = PowerCovariance(1, 1.0)
        s = make_gaussian(model, (4096,))
        rep = run_clt(s, [(64,), (256,)], K_NORM, 300, 2, plans=[partition((256,), (32,), (4,))])
        d = rep.to_dict()
        assert d["normalization"] == K_NORM
        assert len(d["grid"]) == 2 and len(d["certificate"]) == 1
        assert d["grid"][1]["target_variance"] == pytest.approx(
            variance_exact(model, (256,)) / (256 * k_rect(model, (256,))))
        assert isinstance(rep, CltReport)
