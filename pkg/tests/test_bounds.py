import math

import numpy as np
import pytest

from sqrtdiff.bounds import (BoundContext, BoundValues, TailEnvelope,
                             compute_bound_values, density_upper_bound,
                             eval_combinatorial, eval_exponentials, eval_K_m,
                             eval_lambda, eval_local_polys, eval_theta,
                             lambda_growth_regime, markov_tail_bound,
                             tail_envelope)
from sqrtdiff.errors import DegenerateTime, MissingNorm, OutOfRegime
from sqrtdiff.model import GrowthProfile, NormTable


def ctx(t=1.0, m=1, k=1, R=1.0, kappa=1.0, **kw):
    return BoundContext(t=t, T=max(t, 1.0), R=R, m=m, k=k, kappa=kappa, **kw)


class TestExponentials:
    def test_zero_time(self):
        e, ez = eval_exponentials(4, 0.0, 3.0, 2.0)
        assert e.value == 1.0 and ez.value == 1.0

    def test_unit_case(self):
        e, ez = eval_exponentials(2, 1.0, 1.0, 1.0)
        assert e.value == pytest.approx(math.exp(4.0), rel=1e-12)
        assert ez.value == pytest.approx(math.exp(9.0), rel=1e-12)

    def test_saturation_flag(self):
        e, ez = eval_exponentials(64, 1.0, 5.0, 5.0)
        assert e.saturated and ez.saturated
        assert math.isfinite(e.value) and math.isfinite(ez.value)

    def test_order_validation(self):
        with pytest.raises(ValueError):
            eval_exponentials(1, 1.0, 1.0, 1.0)


class TestKm:
    def test_unit_case(self):
        assert eval_K_m(1.0, 1.0, 1, 0.0, 1.0, 1.0) == pytest.approx(7.0, rel=1e-12)

    def test_hand_evaluated_case(self):
        assert eval_K_m(4.0, 0.5, 2, 1.0, 1.0, 1.0) == pytest.approx(46666.0, rel=1e-12)

    def test_monotone_in_drift_norm(self):
        lo = eval_K_m(2.0, 0.5, 1, 1.0, 1.0, 1.0)
        hi = eval_K_m(2.0, 0.5, 1, 2.0, 1.0, 1.0)
        assert hi > lo

    def test_degenerate_time(self):
        with pytest.raises(DegenerateTime):
            eval_K_m(0.0, 0.5, 1, 1.0, 1.0, 1.0)


class TestCombinatorial:
    def test_reference_values(self):
        phi, phi_p, qp = eval_combinatorial(3, 1, 2, 0)
        assert (phi, phi_p, qp) == (147, 0, 832)

    def test_k5(self):
        phi, phi_p, qp = eval_combinatorial(5, 1, 2, 0)
        assert phi == 243
        assert qp == 1488

    def test_m2(self):
        phi, phi_p, qp = eval_combinatorial(3, 2, 1, 1)
        assert phi == 3 * 2 * 49
        assert phi_p == 2 * 4 * 1
        assert qp == 3466

    def test_exact_integers(self):
        for vals in ((1, 1, 0, 0), (4, 2, 3, 1), (2, 3, 5, 2)):
            out = eval_combinatorial(*vals)
            assert all(isinstance(v, int) for v in out)


class TestLocalPolys:
    def test_all_ones(self):
        table = NormTable.flat(k_max=3, value=1.0, c_star=1.0)
        vals = eval_local_polys(table, ctx(), 0.0)
        assert vals.p_k == pytest.approx(2.0)
        assert vals.p_sigma_mk == pytest.approx(2.0)
        assert vals.p_c_m == pytest.approx(16.0)
        assert vals.c_m == pytest.approx(69.0)
        assert vals.p_z_1 == pytest.approx(1.0 * (1 + 1) + 1)

    def test_zero_time_reduces_p(self):
        table = NormTable.flat(k_max=3, value=2.0, c_star=1.0)
        vals = eval_local_polys(table, ctx(t=0.0), 0.0)
        assert vals.p_k == pytest.approx(2.0)  # diffusion norm only

    def test_sigma_scaling_of_pc(self):
        base = NormTable.flat(k_max=3, value=1.0, c_star=1.0)
        doubled = NormTable.flat(k_max=3, value=1.0, c_star=1.0)
        for r in doubled.diffusion:
            doubled.diffusion[r] = tuple(v * 2.0 for v in doubled.diffusion[r])
        v1 = eval_local_polys(base, ctx(), 0.0)
        v2 = eval_local_polys(doubled, ctx(), 0.0)
        b0 = s1 = s2 = 1.0
        expected = ((b0 * 8 * s2 ** 3 + (2 * s1) ** 2) / (b0 * s2 ** 3 + s1 ** 2)) ** 4
        assert v2.p_c_m / v1.p_c_m == pytest.approx(expected, rel=1e-12)

    def test_missing_order(self):
        table = NormTable.flat(k_max=2, value=1.0)
        with pytest.raises(MissingNorm):
            eval_local_polys(table, ctx(k=3), 0.0)


class TestThetaLambda:
    def test_all_factors_one(self):
        partial = BoundValues(c_m=1.0, p_sigma_mk=1.0)
        theta = eval_theta(partial, ctx(gamma_exponent=1.0))
        assert theta.value == pytest.approx(1.0)

    def test_exponent_arithmetic_m1_k1(self):
        # exponent on C_m = 2, on P^sigma = phi_1 + 9 = 84
        partial = BoundValues(c_m=math.e, p_sigma_mk=1.0)
        theta = eval_theta(partial, ctx(gamma_exponent=0.0))
        assert theta.log == pytest.approx(2.0)
        partial = BoundValues(c_m=1.0, p_sigma_mk=math.e)
        theta = eval_theta(partial, ctx(gamma_exponent=0.0))
        assert theta.log == pytest.approx(84.0)

    def test_lambda_values(self):
        assert eval_lambda(1.0, 1.0, ctx(k=1)).value == pytest.approx(2.0)
        c = BoundContext(t=1.0, T=1.0, R=0.5, m=1, k=3)
        assert eval_lambda(1.0, 1.0, c).value == pytest.approx(16.0)

    def test_kappa_linearity(self):
        base = eval_lambda(3.0, 2.0, ctx(k=2, kappa=1.0)).value
        doubled = eval_lambda(3.0, 2.0, ctx(k=2, kappa=2.0)).value
        assert doubled == pytest.approx(2.0 * base, rel=1e-12)

    def test_log_domain_matches_direct(self):
        # Small-number regime where direct evaluation cannot overflow.
        table = NormTable.flat(k_max=3, value=1.0, c_star=1.0)
        context = ctx(t=0.01)
        vals = compute_bound_values(table, context, 0.0)
        e8 = math.exp(math.exp(0.5 * 8 * math.log(0.01) + 8 * math.log(0.1 * 1 + 1)))
        pz = 0.1 * (1 + 1) + 1
        ez36 = math.exp(math.exp(0.5 * 36 * math.log(0.01) + 36 * math.log(pz)))
        e32 = math.exp(math.exp(0.5 * 36 * math.log(0.01) + 36 * math.log(pz)))
        direct_theta = (vals.c_m ** 2.0) * (vals.p_sigma_mk ** 84.0) * max(e8, e8) * max(e32, ez36)
        assert vals.theta_k == pytest.approx(direct_theta, rel=1e-12)
        direct_lambda = 1.0 * (vals.p_0 ** 1 + direct_theta)
        assert vals.lambda_k == pytest.approx(direct_lambda, rel=1e-12)

    def test_monotone_in_norm_inputs(self):
        rng = np.random.default_rng(1234)
        context = ctx(t=0.5, k=2)
        for _ in range(20):
            base_val = 1.0 + rng.uniform(0, 0.5)
            table = NormTable.flat(k_max=4, value=base_val, c_star=0.9)
            ref = compute_bound_values(table, context, 0.0).log_lambda_k
            bumped = NormTable.flat(k_max=4, value=base_val, c_star=0.9)
            which = rng.choice(["drift", "diffusion"])
            r = rng.choice(list(getattr(bumped, which)))
            j = int(rng.integers(0, 5))
            tab = getattr(bumped, which)
            tab[r] = tuple(v + (0.3 if i >= j else 0.0) for i, v in enumerate(tab[r]))
            out = compute_bound_values(bumped, context, 0.0).log_lambda_k
            assert out >= ref - 1e-12

    def test_saturation_flag_propagates(self):
        table = NormTable.flat(k_max=5, value=3.0, c_star=0.5)
        vals = compute_bound_values(table, ctx(t=1.0, k=4), 0.0)
        assert vals.saturation["theta_k"]
        assert math.isfinite(vals.lambda_k)


class TestDensityUpperBound:
    def test_zero_probability(self):
        assert density_upper_bound(2.0, 0.0, 1.0, 1) == 0.0

    def test_unit_case(self):
        assert density_upper_bound(2.0, 1.0, 1.0, 1, 0) == pytest.approx(4.0)

    def test_small_time_factor(self):
        assert density_upper_bound(1.0, 1.0, 0.25, 1, 0) == pytest.approx(9.0)

    def test_pure_time_factor(self):
        for t in (0.1, 0.5, 2.0):
            for k in (0, 1, 2):
                got = density_upper_bound(1.0, 1.0, t, 1, k)
                assert got == pytest.approx(1.0 + t ** (-(2 * k + 3) / 2.0), rel=1e-12)


class TestTailEnvelope:
    def test_constant_C(self):
        env = TailEnvelope(alpha=0.5, gamma_sup=1.0, x=1.0, t=1.0)
        assert env.C == pytest.approx(4.5)

    def test_out_of_regime_raises(self):
        env = TailEnvelope(alpha=0.5, gamma_sup=1.0, x=1.0, t=1.0)
        with pytest.raises(OutOfRegime):
            tail_envelope(env, 1.5)

    def test_log_slope_matches_finite_differences(self):
        env = TailEnvelope(alpha=0.5, gamma_sup=1.0, x=1.0, t=1.0)
        y, h = 10.0, 1e-5
        slope = (math.log(tail_envelope(env, y + h)) - math.log(tail_envelope(env, y - h))) / (2 * h)
        assert slope == pytest.approx(-env.gamma0 / (2 * env.C * env.t), rel=1e-6)

    def test_decreasing_in_y(self):
        env = TailEnvelope(alpha=0.75, gamma_sup=2.0, x=0.0, t=0.5)
        ys = np.linspace(1.5, 30, 50)
        vals = tail_envelope(env, ys)
        assert np.all(np.diff(vals) < 0)


class TestMarkovTail:
    def test_saturates_at_one(self):
        assert markov_tail_bound(16.0, 2, 7.0) == 1.0

    def test_power_decay(self):
        assert markov_tail_bound(16.0, 2, 11.0) == pytest.approx(0.25)
        for y in (50.0, 100.0, 200.0):
            assert markov_tail_bound(16.0, 2, y) == pytest.approx(16.0 / (y - 3) ** 2)

    def test_out_of_regime(self):
        with pytest.raises(OutOfRegime):
            markov_tail_bound(1.0, 2, 2.0)


class TestGrowthRegime:
    @pytest.mark.parametrize("m,k,q,q_bar", [(1, 3, 2, 0), (1, 5, 2, 0), (2, 3, 1, 1)])
    def test_log_log_slope_approaches_exponent(self, m, k, q, q_bar):
        q_prime = eval_combinatorial(k, m, q, q_bar)[2]
        lam = lambda_growth_regime(m, k, q, q_bar, 1e6)
        slope = lam.log / math.log(1e6)
        assert abs(slope - q_prime) / q_prime < 0.02

    def test_slope_stable_across_y(self):
        # The secondary term P_0^mk is dominated so heavily that the slope is
        # already the exponent to rounding noise at moderate y.
        q_prime = eval_combinatorial(3, 1, 2, 0)[2]
        for y in (1e3, 1e6, 1e9):
            slope = lambda_growth_regime(1, 3, 2, 0, y).log / math.log(y)
            assert abs(slope - q_prime) / q_prime < 1e-9
