"""Distribution-engine tests.

High-precision reference constants were computed with 50-digit arithmetic
(mpmath) ahead of time and frozen here as literals.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from postsel.truncnorm import (DegenerateRegion, TruncRegion,
                               TruncatedGaussian, selective_pivot, std_cdf,
                               std_pdf, std_quantile, trunc_cdf, trunc_mass,
                               trunc_mean, trunc_pdf, trunc_quantile,
                               trunc_sample, trunc_var)

# frozen 50-digit references
Z_975 = 1.95996398454005423552                 # std_quantile(0.975)
PHI_M10 = 7.61985302416052606597e-24           # std_cdf(-10)
MASS_PM1 = 0.68268949213708589717              # P(|Z| <= 1)
PDF_2P5_TAIL2 = 0.385235139152047953227        # phi(2.5) / (2 * P(Z > 2))


def TG(mu, sigma, region):
    return TruncatedGaussian(mu, sigma, region)


def tail(lam):
    return TruncRegion.two_sided_tail(lam)


def interval(a, b):
    return TruncRegion.interval(a, b)


class TestStandardNormal:
    def test_cdf_half_at_zero(self):
        assert std_cdf(0.0) == 0.5

    def test_quantile_against_frozen_oracle(self):
        assert std_quantile(0.975) == pytest.approx(Z_975, rel=1e-13)

    def test_deep_tail_cdf_against_frozen_oracle(self):
        assert std_cdf(-10.0) == pytest.approx(PHI_M10, rel=1e-13)

    def test_quantile_cdf_roundtrip(self):
        for p in [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1 - 1e-9]:
            assert std_cdf(std_quantile(p)) == pytest.approx(p, rel=1e-12)

    def test_quantile_domain(self):
        for p in [0.0, 1.0, -0.1, 1.1]:
            with pytest.raises(ValueError):
                std_quantile(p)


class TestMass:
    def test_whole_line(self):
        assert trunc_mass(TG(0, 1, tail(0.0))) == 1.0

    def test_central_interval_against_frozen_oracle(self):
        assert trunc_mass(TG(0, 1, interval(-1, 1))) == pytest.approx(
            MASS_PM1, rel=1e-13)

    def test_tail_complement(self):
        assert trunc_mass(TG(0, 1, tail(Z_975))) == pytest.approx(
            0.05, rel=1e-12)

    def test_deep_region_still_positive(self):
        z = trunc_mass(TG(0, 1, tail(37.0)))
        assert 0 < z < 1e-290

    def test_degenerate_region_rejected(self):
        with pytest.raises(DegenerateRegion):
            TG(0.0, 1.0, interval(39.0, 40.0))

    def test_sigma_invariance(self):
        assert trunc_mass(TG(3, 2, tail(5.0))) == pytest.approx(
            trunc_mass(TG(1.5, 1, tail(2.5))), rel=1e-14)


class TestPdf:
    def test_untruncated_at_zero(self):
        assert trunc_pdf(TG(0, 1, tail(0.0)), 0.0) == pytest.approx(
            std_pdf(0.0), rel=1e-15)

    def test_outside_region_zero(self):
        assert trunc_pdf(TG(0, 1, interval(-1, 1)), 2.0) == 0.0
        assert trunc_pdf(TG(0, 1, tail(2.0)), 0.5) == 0.0

    def test_tail_value_against_frozen_oracle(self):
        assert trunc_pdf(TG(0, 1, tail(2.0)), 2.5) == pytest.approx(
            PDF_2P5_TAIL2, rel=1e-13)

    def test_integrates_to_one(self):
        tg = TG(1.0, 1.3, tail(2.0))
        left = quad(lambda x: trunc_pdf(tg, x), -30, -2.0)[0]
        right = quad(lambda x: trunc_pdf(tg, x), 2.0, 30)[0]
        assert left + right == pytest.approx(1.0, abs=1e-8)
        tg2 = TG(0.5, 0.7, interval(-1, 2))
        assert quad(lambda x: trunc_pdf(tg2, x), -1, 2)[0] == pytest.approx(
            1.0, abs=1e-8)


class TestCdf:
    def test_reduces_to_gaussian_on_whole_line(self):
        tg = TG(1.0, 2.0, interval(-np.inf, np.inf))
        for x in [-3.0, 0.0, 1.0, 4.0]:
            assert trunc_cdf(tg, x) == pytest.approx(
                std_cdf((x - 1.0) / 2.0), rel=1e-13)

    def test_symmetric_tail_half_mass_below(self):
        assert trunc_cdf(TG(0, 1, tail(2.0)), -2.0) == pytest.approx(
            0.5, rel=1e-13)

    def test_interval_case_against_quadrature(self):
        tg = TG(1.0, 1.0, interval(0.0, 3.0))
        want = quad(lambda x: trunc_pdf(tg, x), 0.0, 1.5)[0]
        assert trunc_cdf(tg, 1.5) == pytest.approx(want, abs=1e-10)

    def test_monotone_in_x_with_endpoints(self):
        tg = TG(0.5, 1.0, tail(1.5))
        xs = np.linspace(-8, 8, 400)
        vals = np.array([trunc_cdf(tg, x) for x in xs])
        assert np.all(np.diff(vals) >= 0)
        tgi = TG(0.5, 1.0, interval(-1.0, 3.0))
        assert trunc_cdf(tgi, -1.5) == 0.0
        assert trunc_cdf(tgi, 3.0) == pytest.approx(1.0, abs=1e-12)
        assert trunc_cdf(tgi, 4.0) == pytest.approx(1.0, abs=1e-12)

    def test_strictly_decreasing_in_mu(self):
        # strict decrease holds wherever the CDF is not saturated at 1.0
        # in double precision (it plateaus once the upper tail mass drops
        # below machine resolution)
        for x, lam in [(2.5, 2.0), (0.5, 0.0), (-3.0, 2.5)]:
            mus = np.linspace(-10, 10, 201)
            vals = np.array([trunc_cdf(TG(m, 1.0, tail(lam)), x)
                             for m in mus])
            d = np.diff(vals)
            unsat = np.maximum(vals[:-1], vals[1:]) < 1.0 - 1e-12
            assert np.all(d[unsat] < 0)
            assert np.all(d <= 0)
            # absolute 1e-12 decrease where the CDF itself is O(1)
            central = (vals[:-1] > 1e-6) & (vals[1:] < 1.0 - 1e-10)
            assert np.all(d[central] <= -1e-12)

    def test_mu_symmetry(self):
        for mu in [-4.0, -1.0, 0.3, 2.2]:
            for x in [2.1, 3.0, -2.5]:
                a = trunc_cdf(TG(mu, 1, tail(2.0)), x)
                b = 1.0 - trunc_cdf(TG(-mu, 1, tail(2.0)), -x)
                assert a == pytest.approx(b, abs=1e-12)


class TestMoments:
    def test_symmetric_mean_zero(self):
        for t in [0.0, 1.0, 3.0, 8.0]:
            assert trunc_mean(TG(0, 1, tail(t))) == 0.0
        assert trunc_mean(TG(0, 1, interval(-0.3, 0.3))) == 0.0

    def test_tail_mean_against_quadrature(self):
        tg = TG(1.0, 1.0, tail(2.0))
        want = (quad(lambda x: x * trunc_pdf(tg, x), -30, -2)[0]
                + quad(lambda x: x * trunc_pdf(tg, x), 2, 30)[0])
        assert trunc_mean(tg) == pytest.approx(want, abs=1e-10)

    def test_interval_mean_against_quadrature(self):
        tg = TG(0.7, 1.4, interval(-1.0, 2.5))
        want = quad(lambda x: x * trunc_pdf(tg, x), -1.0, 2.5)[0]
        assert trunc_mean(tg) == pytest.approx(want, abs=1e-10)

    def test_variance_against_quadrature(self):
        tg = TG(1.0, 1.0, tail(2.0))
        m = trunc_mean(tg)
        want = (quad(lambda x: (x - m) ** 2 * trunc_pdf(tg, x), -30, -2)[0]
                + quad(lambda x: (x - m) ** 2 * trunc_pdf(tg, x), 2, 30)[0])
        assert trunc_var(tg) == pytest.approx(want, rel=1e-8)

    def test_mean_monotone_and_derivative_is_variance(self):
        h = 1e-5
        for t in [0.0, 1.0, 4.0, 8.0]:
            for mu in np.linspace(-10, 10, 41):
                up = trunc_mean(TG(mu + h, 1, tail(t)))
                dn = trunc_mean(TG(mu - h, 1, tail(t)))
                fd = (up - dn) / (2 * h)
                assert fd >= -1e-8
                v = trunc_var(TG(mu, 1, tail(t)))
                assert fd == pytest.approx(v, rel=1e-5, abs=1e-8)

    def test_mean_sign_symmetry(self):
        for mu in [0.5, 1.7, 6.0]:
            assert trunc_mean(TG(-mu, 1, tail(2.0))) == pytest.approx(
                -trunc_mean(TG(mu, 1, tail(2.0))), abs=1e-12)

    def test_deep_tail_finite(self):
        tg = TG(-30.0, 1.0, tail(36.0))
        m = trunc_mean(tg)
        assert np.isfinite(m) and abs(m) >= 36.0 - 1.0
        assert 0 <= trunc_var(tg) < 1.0


class TestQuantileSampling:
    def test_quantile_cdf_roundtrip(self):
        tg = TG(0.8, 1.2, tail(2.0))
        for p in [1e-4, 0.1, 0.5, 0.9, 1 - 1e-4]:
            x = trunc_quantile(tg, p)
            assert trunc_cdf(tg, x) == pytest.approx(p, rel=1e-10)

    def test_interval_quantile_roundtrip(self):
        tg = TG(0.0, 2.0, interval(1.0, 6.0))
        for p in [0.01, 0.5, 0.99]:
            x = trunc_quantile(tg, p)
            assert 1.0 <= x <= 6.0
            assert trunc_cdf(tg, x) == pytest.approx(p, rel=1e-10)

    def test_lam_zero_matches_gaussian_stream(self):
        rng1 = np.random.default_rng(5)
        rng2 = np.random.default_rng(5)
        draws = trunc_sample(TG(2.0, 3.0, tail(0.0)), rng1, 100)
        want = 2.0 + 3.0 * std_quantile(rng2.random(100))
        np.testing.assert_allclose(draws, want, rtol=1e-12)

    def test_draws_inside_region_and_mean_consistent(self):
        tg = TG(0.0, 1.0, tail(2.0))
        rng = np.random.default_rng(11)
        draws = trunc_sample(tg, rng, 100_000)
        assert np.all(np.abs(draws) >= 2.0)
        se = np.sqrt(trunc_var(tg) / len(draws))
        assert abs(np.mean(draws) - trunc_mean(tg)) < 3 * se

    def test_sampling_deterministic(self):
        tg = TG(1.0, 1.0, tail(1.5))
        a = trunc_sample(tg, np.random.default_rng(7), 50)
        b = trunc_sample(tg, np.random.default_rng(7), 50)
        np.testing.assert_array_equal(a, b)


class TestSelectivePivot:
    def test_reduces_to_gaussian_cdf(self):
        assert selective_pivot(1.3, 0.5, 4.0, -np.inf, np.inf) == \
            pytest.approx(std_cdf((1.3 - 0.5) / 2.0), rel=1e-12)

    def test_endpoint_limits(self):
        lo = selective_pivot(2.0 + 1e-11, 0.0, 1.0, 2.0, np.inf)
        hi = selective_pivot(6.0 - 1e-11, 0.0, 1.0, 2.0, 6.0)
        assert lo < 1e-9
        assert hi > 1 - 1e-9

    def test_domain_error_outside(self):
        with pytest.raises(ValueError):
            selective_pivot(1.0, 0.0, 1.0, 2.0, np.inf)

    def test_uniform_under_correct_conditioning(self):
        rng = np.random.default_rng(3)
        tg = TG(0.7, 1.0, interval(1.0, np.inf))
        draws = trunc_sample(tg, rng, 20_000)
        piv = selective_pivot(draws, 0.7, 1.0, 1.0, np.inf)
        from scipy.stats import kstest
        assert kstest(piv, "uniform").pvalue > 0.01


class TestValidation:
    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            TG(0.0, 0.0, tail(1.0))
        with pytest.raises(ValueError):
            TG(0.0, -1.0, tail(1.0))

    def test_region_invariants(self):
        with pytest.raises(ValueError):
            TruncRegion.two_sided_tail(-0.5)
        with pytest.raises(ValueError):
            TruncRegion.interval(2.0, 1.0)
