import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid, quad
from scipy.stats import ncx2 as scipy_ncx2

from sqrtdiff.cir import (cir_density, cir_exact_sample, cir_mean_var,
                          cir_params, cir_pdf, ncx2_pdf, sample_scaled_ncx2)


class TestParams:
    def test_reference_values(self):
        p = cir_params(1, 1, 1, 1, 1)
        assert p.delta == pytest.approx(4.0)
        assert p.L_t == pytest.approx((1 - math.exp(-1)) / 4, rel=1e-12)
        assert p.zeta_t == pytest.approx(4 / (math.e - 1), rel=1e-12)

    def test_zero_start_zero_noncentrality(self):
        assert cir_params(1, 1, 1, 0.0, 1).zeta_t == 0.0

    def test_small_b_matches_limit(self):
        tiny = cir_params(1, 1e-12, 1, 1, 1)
        limit = cir_params(1, 0.0, 1, 1, 1)
        assert tiny.L_t == pytest.approx(limit.L_t, rel=1e-6)
        assert tiny.zeta_t == pytest.approx(limit.zeta_t, rel=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            cir_params(0.0, 1, 1, 1, 1)
        with pytest.raises(ValueError):
            cir_params(1, 1, 1, 1, 0.0)
        with pytest.raises(ValueError):
            cir_params(1, 1, 1, -1.0, 1)


class TestNcx2:
    def test_central_chi2_df4(self):
        # chi2_4 pdf at z: z e^(-z/2) / 4
        assert ncx2_pdf(2.0, 4, 0) == pytest.approx(math.exp(-1) / 2, rel=1e-12)

    def test_central_chi2_df2_at_origin(self):
        assert ncx2_pdf(1e-12, 2, 0) == pytest.approx(0.5, rel=1e-9)

    def test_normalization(self):
        val, _ = quad(lambda z: ncx2_pdf(z, 4, 2.327), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_series_bessel_agreement(self):
        for delta in (0.5, 1.0, 2.0, 4.0, 10.0, 20.0):
            for zeta in (0.0, 0.5, 2.33, 10.0, 50.0):
                for z in (1e-6, 1e-3, 0.1, 1.0, 5.0, 20.0, 80.0, 200.0):
                    s = ncx2_pdf(z, delta, zeta)
                    b = ncx2_pdf(z, delta, zeta, method="bessel")
                    if s > 1e-280:
                        assert b == pytest.approx(s, rel=1e-10), (delta, zeta, z)

    def test_against_scipy(self):
        for delta, zeta, z in ((3.0, 1.5, 2.0), (0.8, 4.0, 0.3), (6.0, 20.0, 30.0)):
            assert ncx2_pdf(z, delta, zeta) == pytest.approx(
                scipy_ncx2.pdf(z, delta, zeta), rel=1e-10)


class TestDensity:
    def test_scale_consistency(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            p = cir_params(rng.uniform(0.3, 2), rng.uniform(0.2, 2),
                           rng.uniform(0.5, 2), rng.uniform(0, 3), rng.uniform(0.3, 2))
            y = rng.uniform(0.05, 4)
            point = cir_density(p, y)
            assert point.pdf * p.L_t == pytest.approx(
                ncx2_pdf(y / p.L_t, p.delta, p.zeta_t), rel=1e-12)

    def test_divergence_rate_at_zero_delta1(self):
        # delta = 1: log pdf - (delta/2 - 1) log y stays bounded as y -> 0.
        p = cir_params(0.25, 1, 1, 1, 1)
        ys = np.geomspace(1e-8, 1e-2, 20)
        vals = np.log(cir_pdf(p, ys)) - (p.delta / 2 - 1) * np.log(ys)
        assert np.max(vals) - np.min(vals) < 0.1

    def test_normalization(self):
        p = cir_params(1, 1, 1, 1, 1)
        val, _ = quad(lambda y: cir_pdf(p, y), 0, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_density_point_metadata(self):
        p = cir_params(1, 1, 1, 1, 1)
        point = cir_density(p, 1.0)
        assert point.method == "series"
        assert point.series_terms_used >= 1


class TestMeanVar:
    def test_equilibrium_start(self):
        mean, _ = cir_mean_var(cir_params(1, 1, 1, 1, 1))
        assert mean == pytest.approx(1.0, rel=1e-12)

    def test_short_time_limits(self):
        p = cir_params(1, 1, 1, 2.0, 1e-10)
        mean, var = cir_mean_var(p)
        assert mean == pytest.approx(2.0, rel=1e-8)
        assert var == pytest.approx(0.0, abs=1e-8)

    def test_matches_quadrature_moments(self):
        p = cir_params(0.8, 0.5, 1.2, 1.5, 0.7)
        mean, var = cir_mean_var(p)
        mq, _ = quad(lambda y: y * cir_pdf(p, y), 0, 80, limit=300)
        sq, _ = quad(lambda y: (y - mean) ** 2 * cir_pdf(p, y), 0, 80, limit=300)
        assert mq == pytest.approx(mean, rel=1e-6)
        assert sq == pytest.approx(var, rel=1e-6)

    def test_b_zero_limit(self):
        p0 = cir_params(1, 0.0, 1, 1, 1)
        p1 = cir_params(1, 1e-10, 1, 1, 1)
        assert cir_mean_var(p0)[0] == pytest.approx(cir_mean_var(p1)[0], rel=1e-8)
        assert cir_mean_var(p0)[1] == pytest.approx(cir_mean_var(p1)[1], rel=1e-6)


class TestSampling:
    def test_determinism(self):
        p = cir_params(1, 1, 1, 1, 1)
        a = cir_exact_sample(p, 42, n=100)
        b = cir_exact_sample(p, 42, n=100)
        assert np.array_equal(a, b)
        assert cir_exact_sample(p, 42) == cir_exact_sample(p, 42)

    def test_exponential_special_case(self):
        # zeta = 0, delta = 2: scaled chi2_2 = Exp(1/(2L)); mean 2L.
        p = cir_params(0.5, 1, 1, 0.0, 1)
        assert p.delta == pytest.approx(2.0) and p.zeta_t == 0.0
        s = cir_exact_sample(p, 7, n=200_000)
        se = s.std(ddof=1) / math.sqrt(s.size)
        assert abs(s.mean() - 2 * p.L_t) < 3 * se

    def test_mean_matches_closed_form(self):
        p = cir_params(1, 1, 1, 1, 1)
        s = cir_exact_sample(p, 11, n=200_000)
        mean, _ = cir_mean_var(p)
        se = s.std(ddof=1) / math.sqrt(s.size)
        assert abs(s.mean() - mean) < 3 * se

    def test_low_delta_branch(self):
        p = cir_params(0.2, 1, 1, 1, 1)  # delta = 0.8 triggers the Poisson route
        s = cir_exact_sample(p, 3, n=200_000)
        mean, var = cir_mean_var(p)
        se = math.sqrt(var / s.size)
        assert abs(s.mean() - mean) < 4 * se
        assert np.all(s >= 0)

    def test_ks_against_quadrature_cdf(self):
        p = cir_params(1, 1, 1, 1, 1)
        s = np.sort(cir_exact_sample(p, 2024, n=100_000))
        grid = np.linspace(1e-9, 14, 4001)
        cdf = cumulative_trapezoid(cir_pdf(p, grid), grid, initial=0.0)
        cdf /= cdf[-1]
        F = np.interp(s, grid, cdf)
        n = s.size
        ks = max(np.max(np.abs(F - np.arange(1, n + 1) / n)),
                 np.max(np.abs(F - np.arange(n) / n)))
        assert ks <= 0.01
