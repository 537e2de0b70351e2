import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from riskalloc.errors import DistinctRatesRequired, DomainError
from riskalloc.services.distribution_service.marginals import (
    Exponential,
    Gamma,
    LogNormal,
    ParetoLomax,
    build_marginal,
    check_distinct_rates,
    erlang_cdf,
    erlang_coefficients,
    erlang_survival,
    quantile,
    survival,
)

FAMILIES = [
    Exponential(0.25),
    ParetoLomax(2.5, 3.0),
    LogNormal(0.5, 1.2),
    Gamma(2.0, 0.5),
]


class TestMarginalFamilies:

    @pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.family)
    def test_survival_and_cdf_add_to_one(self, m):
        x = np.linspace(0.0, 50.0, 101)
        np.testing.assert_allclose(m.survival(x) + m.cdf(x), 1.0, atol=1e-14)

    @pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.family)
    def test_quantile_inverts_cdf(self, m):
        p = np.array([1e-6, 0.01, 0.3, 0.5, 0.9, 0.999])
        np.testing.assert_allclose(m.cdf(m.quantile(p)), p, rtol=1e-9)

    @pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.family)
    def test_isf_keeps_tiny_tails(self, m):
        q = np.array([1e-12, 1e-30, 1e-80])
        np.testing.assert_allclose(m.survival(m.isf(q)), q, rtol=1e-6)

    @pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.family)
    def test_density_integrates_to_cdf(self, m):
        x = np.linspace(0.0, 10.0, 20001)
        integral = trapezoid(m.density(x), x)
        assert integral == pytest.approx(m.cdf(10.0) - m.cdf(0.0), abs=1e-4)

    @pytest.mark.parametrize("m", FAMILIES, ids=lambda m: m.family)
    def test_sample_mean(self, m):
        draws = m.sample(np.random.default_rng(7), 400_000)
        assert draws.min() >= 0.0
        assert draws.mean() == pytest.approx(m.mean(), rel=0.03)

    def test_scalar_in_float_out(self):
        m = Exponential(2.0)
        assert isinstance(m.survival(1.0), float)
        assert isinstance(m.cdf(np.array([1.0, 2.0])), np.ndarray)
        assert survival(m, 1.0) == pytest.approx(math.exp(-2.0))

    def test_negative_argument(self):
        m = ParetoLomax(2.0, 1.0)
        assert m.survival(-3.0) == 1.0
        assert m.cdf(-3.0) == 0.0
        assert m.density(-3.0) == 0.0

    def test_pareto_closed_forms(self):
        m = ParetoLomax(2.0, 1.0)
        assert m.survival(1.0) == pytest.approx(0.25)
        assert m.mean() == pytest.approx(1.0)
        assert ParetoLomax(0.8, 1.0).mean() == math.inf

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_outside_open_interval(self, p):
        with pytest.raises(DomainError):
            quantile(Exponential(1.0), p)

    @pytest.mark.parametrize("factory", [
        lambda: Exponential(0.0),
        lambda: Exponential(-1.0),
        lambda: ParetoLomax(2.0, 0.0),
        lambda: LogNormal(float("nan"), 1.0),
        lambda: Gamma(0.0, 1.0),
    ])
    def test_invalid_parameters(self, factory):
        with pytest.raises(DomainError):
            factory()


class TestErlang:

    def test_two_rate_values(self):
        assert erlang_survival([1.0, 2.0], 1.0) == pytest.approx(0.600424, abs=1e-6)
        assert erlang_cdf([1.0, 2.0], 1.0) == pytest.approx(0.399576, abs=1e-6)

    def test_coefficients_sum_to_one(self):
        np.testing.assert_allclose(erlang_coefficients([0.5, 1.0, 2.0]).sum(), 1.0, rtol=1e-12)

    def test_matches_simulation(self):
        rates = np.array([0.5, 1.0, 2.0])
        rng = np.random.default_rng(11)
        s = (rng.standard_exponential((500_000, 3)) / rates).sum(axis=1)
        for x in (1.0, 3.0, 8.0):
            assert np.mean(s > x) == pytest.approx(erlang_survival(rates, x), abs=3e-3)

    def test_rate_order_is_irrelevant(self):
        x = np.linspace(0.1, 20.0, 25)
        np.testing.assert_allclose(erlang_survival([2.0, 0.5, 1.0], x), erlang_survival([0.5, 1.0, 2.0], x), rtol=1e-10)

    def test_cdf_small_argument(self):
        # the cdf of a sum of two exponentials is O(x^2) near zero
        value = erlang_cdf([1.0, 2.0], 1e-8)
        assert value == pytest.approx(1e-16, rel=1e-4)

    def test_equal_rates_rejected(self):
        with pytest.raises(DistinctRatesRequired):
            check_distinct_rates([1.0, 1.0])
        with pytest.raises(DistinctRatesRequired):
            erlang_survival([0.3, 0.3 * (1 + 1e-12)], 1.0)

    def test_nonpositive_rates_rejected(self):
        with pytest.raises(DomainError):
            check_distinct_rates([1.0, -2.0])


class TestBuildMarginal:

    def test_families(self):
        assert build_marginal({"family": "exponential", "rate": 0.5}) == Exponential(0.5)
        assert build_marginal({"family": "lomax", "shape": 2, "scale": 3}) == ParetoLomax(2.0, 3.0)
        assert build_marginal({"family": "Gamma", "shape": 2, "rate": 1}) == Gamma(2.0, 1.0)

    def test_missing_parameter(self):
        with pytest.raises(DomainError, match="missing parameter"):
            build_marginal({"family": "lognormal", "mu": 0.0})

    def test_unknown_family(self):
        with pytest.raises(DomainError, match="unknown marginal family"):
            build_marginal({"family": "weibull"})
