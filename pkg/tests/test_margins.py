import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from copmix.errors import DomainError, ParameterError
from copmix.margins import (
    BetaShapesPrior,
    GammaPrior,
    MarginParams,
    MarginSpec,
    NormalInverseGammaPrior,
    beta_params,
    exponential_params,
    from_unconstrained,
    log_jacobian,
    margin_cdf,
    margin_logpdf,
    margin_quantile,
    normal_params,
    phi_cdf,
    prior_logpdf,
    prior_sample,
    probit,
    to_unconstrained,
)

NORMAL_SPEC = MarginSpec("normal", NormalInverseGammaPrior(0.0, 0.1, 2.0, 1.0))
BETA_SPEC = MarginSpec("beta", BetaShapesPrior(GammaPrior(2.0, 0.5), GammaPrior(2.0, 0.5)))
EXP_SPEC = MarginSpec("exponential", GammaPrior(2.0, 0.5))


def random_params(family, rng):
    if family == "normal":
        return normal_params(rng.normal(0, 2), rng.uniform(0.2, 4.0))
    if family == "beta":
        return beta_params(rng.uniform(0.4, 6.0), rng.uniform(0.4, 6.0))
    return exponential_params(rng.uniform(0.2, 5.0))


class TestCdf:
    def test_standard_normal_median(self):
        assert margin_cdf(normal_params(0, 1), 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_exponential_median(self):
        # F(ln 2 / rate) = 1/2
        assert margin_cdf(exponential_params(2.5), math.log(2) / 2.5) == pytest.approx(0.5, abs=1e-12)

    def test_beta_power_law(self):
        # for beta=1 the CDF is x^alpha: 0.5**3 = 0.125
        assert margin_cdf(beta_params(3, 1), 0.5) == pytest.approx(0.125, abs=1e-12)

    def test_exact_bounds_off_support(self):
        assert margin_cdf(beta_params(3, 1), -0.5) == 0.0
        assert margin_cdf(beta_params(3, 1), 1.5) == 1.0
        assert margin_cdf(exponential_params(1.0), -2.0) == 0.0

    def test_invalid_params_rejected(self):
        with pytest.raises(ParameterError):
            normal_params(0, -1)
        with pytest.raises(ParameterError):
            beta_params(0, 1)
        with pytest.raises(ParameterError):
            exponential_params(0)


class TestQuantile:
    def test_normal_median(self):
        assert margin_quantile(normal_params(0, 1), 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_exponential_unit(self):
        assert margin_quantile(exponential_params(1.0), 1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-12)

    def test_beta_cube_root(self):
        assert margin_quantile(beta_params(3, 1), 0.125) == pytest.approx(0.5, abs=1e-12)

    def test_domain_errors(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(DomainError):
                margin_quantile(normal_params(0, 1), bad)

    @given(
        st.sampled_from(["normal", "beta", "exponential"]),
        st.integers(0, 10**6),
        st.floats(0.001, 0.999),
    )
    def test_round_trip(self, family, seed, u):
        params = random_params(family, np.random.default_rng(seed))
        x = margin_quantile(params, u)
        assert abs(margin_cdf(params, x) - u) < 1e-9


class TestLogpdf:
    def test_standard_normal_at_zero(self):
        assert margin_logpdf(normal_params(0, 1), 0.0) == pytest.approx(
            -0.918938533204672742, abs=1e-12
        )

    def test_exponential_at_zero_equals_log_rate(self):
        assert margin_logpdf(exponential_params(2.5), 0.0) == pytest.approx(math.log(2.5), abs=1e-12)

    def test_beta_off_support(self):
        assert margin_logpdf(beta_params(3, 1), 1.5) == -math.inf
        assert margin_logpdf(beta_params(3, 1), -0.2) == -math.inf

    @pytest.mark.parametrize("family", ["normal", "beta", "exponential"])
    def test_density_matches_cdf_derivative(self, family):
        rng = np.random.default_rng(42)
        for _ in range(5):
            params = random_params(family, rng)
            if family == "normal":
                grid = np.linspace(params.values[0] - 2, params.values[0] + 2, 41)
                h = 1e-6
            elif family == "beta":
                grid = np.linspace(0.05, 0.95, 41)
                h = 1e-7
            else:
                grid = np.linspace(0.05, 3.0, 41)
                h = 1e-7
            numeric = (margin_cdf(params, grid + h) - margin_cdf(params, grid - h)) / (2 * h)
            exact = np.exp(margin_logpdf(params, grid))
            assert np.max(np.abs(numeric - exact) / exact) < 1e-5

    @pytest.mark.parametrize("family", ["normal", "beta", "exponential"])
    def test_cdf_monotone_on_grid(self, family):
        rng = np.random.default_rng(3)
        params = random_params(family, rng)
        if family == "normal":
            grid = np.linspace(-8, 8, 1000)
        elif family == "beta":
            grid = np.linspace(0, 1, 1000)
        else:
            grid = np.linspace(0, 10, 1000)
        vals = margin_cdf(params, grid)
        assert np.all(np.diff(vals) >= 0)


class TestPriors:
    @pytest.mark.parametrize("spec", [NORMAL_SPEC, BETA_SPEC, EXP_SPEC])
    def test_samples_valid_and_finite_logpdf(self, spec):
        rng = np.random.default_rng(0)
        for _ in range(200):
            params = prior_sample(spec, rng)
            assert params.family == spec.family
            lp = prior_logpdf(spec, params)
            assert math.isfinite(lp)

    def test_sampled_variance_positive(self):
        rng = np.random.default_rng(1)
        draws = [prior_sample(NORMAL_SPEC, rng).values[1] for _ in range(2000)]
        assert min(draws) > 0

    def test_gamma_prior_mean(self):
        # gamma(shape 2, rate 2) has mean 1; 1e5-draw MC mean within 3 sigma
        spec = MarginSpec("exponential", GammaPrior(2.0, 2.0))
        rng = np.random.default_rng(2)
        draws = np.array([prior_sample(spec, rng).values[0] for _ in range(100_000)])
        se = math.sqrt(2.0) / 2.0 / math.sqrt(draws.size)
        assert abs(draws.mean() - 1.0) < 3 * se

    def test_family_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            prior_logpdf(NORMAL_SPEC, beta_params(1, 1))
        with pytest.raises(ParameterError):
            MarginSpec("normal", GammaPrior(1, 1))


class TestProbit:
    def test_phi_at_zero(self):
        assert phi_cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_known_quantile(self):
        # oracle: 30-digit inversion of the normal CDF
        assert probit(0.975) == pytest.approx(1.95996398454005424, abs=1e-12)

    def test_round_trip_scalar(self):
        assert probit(phi_cdf(3.7)) == pytest.approx(3.7, abs=1e-9)

    def test_round_trip_grid(self):
        z = np.linspace(-6, 6, 2001)
        back = probit(phi_cdf(z))
        assert np.max(np.abs(back - z)) < 1e-9

    def test_domain_error_at_bounds(self):
        for bad in (0.0, 1.0):
            with pytest.raises(DomainError):
                probit(bad)


class TestReparameterization:
    @given(st.sampled_from(["normal", "beta", "exponential"]), st.integers(0, 10**6))
    def test_round_trip(self, family, seed):
        params = random_params(family, np.random.default_rng(seed))
        back = from_unconstrained(family, to_unconstrained(params))
        assert back.family == family
        assert np.allclose(back.values, params.values, rtol=1e-12)

    def test_jacobian_positive_params(self):
        p = beta_params(2.0, 5.0)
        assert log_jacobian(p) == pytest.approx(math.log(2.0) + math.log(5.0))
        n = normal_params(3.0, 4.0)
        assert log_jacobian(n) == pytest.approx(math.log(4.0))
