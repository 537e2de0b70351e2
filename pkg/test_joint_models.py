import math

import numpy as np
import pytest

from riskalloc.errors import DomainError, SingularParameters
from riskalloc.services.distribution_service.joint_models import (
    Comonotonic,
    CorrelatedParetoMixture,
    FgmExponential,
    IndependentExponential,
    IndependentPareto,
    MarshallOlkin,
    build_model,
    exp_joint_lower_prob,
    fgm_building_block,
    fgm_joint_cdf_x1_s,
    fgm_joint_cdf_x2_s,
    mixture_joint_lower_prob,
    mo_joint_cdf_x1_s,
    mo_joint_cdf_x2_s,
    sample_matrix,
    sample_vector,
)
from riskalloc.services.distribution_service.marginals import Exponential, LogNormal, ParetoLomax

N = 400_000


def _draw(model, n=N, seed=3):
    return sample_matrix(model, np.random.default_rng(seed), n)


def _assert_frequency(hits, expected):
    """Empirical frequency within five standard errors of the exact value."""
    se = math.sqrt(max(expected * (1.0 - expected), 1e-12) / hits.size)
    assert abs(hits.mean() - expected) <= 5.0 * se + 1e-12


class TestSampling:

    @pytest.mark.parametrize("model", [
        IndependentExponential((0.5, 1.0, 2.0)),
        IndependentPareto(2.0, (1.0, 2.0)),
        CorrelatedParetoMixture(3.0, 2.0, (1.0, 2.0)),
        Comonotonic((Exponential(0.05), LogNormal(0.0, 1.0))),
        FgmExponential(0.05, 0.25, 0.7),
        MarshallOlkin(0.1, 0.05, 0.25),
    ], ids=lambda m: m.kind)
    def test_shape_and_marginal_tails(self, model):
        losses = _draw(model)
        assert losses.shape == (N, model.dimension)
        assert np.all(losses >= 0.0)
        for i, m in enumerate(model.marginals):
            x = float(m.quantile(0.8))
            _assert_frequency(losses[:, i] > x, m.survival(x))

    def test_sample_vector(self):
        vector = sample_vector(IndependentExponential((1.0, 2.0)), np.random.default_rng(0))
        assert vector.shape == (2,)

    def test_same_generator_state_same_draws(self):
        model = MarshallOlkin(0.1, 0.05, 0.25)
        np.testing.assert_array_equal(_draw(model, 1000, 5), _draw(model, 1000, 5))

    def test_comonotonic_coordinates_share_a_level(self):
        model = Comonotonic((Exponential(0.05), ParetoLomax(2.0, 3.0)))
        losses = _draw(model, 1000)
        np.testing.assert_allclose(model.marginal(0).cdf(losses[:, 0]), model.marginal(1).cdf(losses[:, 1]),
                                   atol=1e-12)

    def test_mixture_marginal_is_lomax(self):
        model = CorrelatedParetoMixture(3.0, 2.0, (1.0, 4.0))
        assert model.marginal(1) == ParetoLomax(3.0, 0.5)


class TestFgm:

    def test_parameter_checks(self):
        with pytest.raises(DomainError, match="beta1 < beta2/2"):
            FgmExponential(0.2, 0.3, 0.0)
        with pytest.raises(DomainError, match="theta"):
            FgmExponential(0.05, 0.25, 1.5)

    @pytest.mark.parametrize("theta", [-1.0, 0.5, 1.0])
    def test_joint_cdf_matches_samples(self, theta):
        model = FgmExponential(0.05, 0.25, theta)
        losses = _draw(model)
        for x1, x2 in [(10.0, 2.0), (20.0, 5.0), (40.0, 1.0)]:
            hits = (losses[:, 0] <= x1) & (losses[:, 1] <= x2)
            _assert_frequency(hits, model.joint_cdf(x1, x2))

    def test_correlation(self):
        model = FgmExponential(0.05, 0.25, 1.0)
        losses = _draw(model)
        assert np.corrcoef(losses.T)[0, 1] == pytest.approx(model.pearson_correlation(), abs=0.01)
        assert model.pearson_correlation() == 0.25

    @pytest.mark.parametrize("theta", [-0.8, 0.0, 0.6])
    def test_cdf_with_sum_matches_samples(self, theta):
        model = FgmExponential(0.05, 0.25, theta)
        losses = _draw(model)
        s = losses.sum(axis=1)
        for x, total in [(10.0, 30.0), (35.0, 50.0), (5.0, 5.0)]:
            _assert_frequency((losses[:, 0] <= x) & (s <= total), fgm_joint_cdf_x1_s(model, x, total))
            _assert_frequency((losses[:, 1] <= x) & (s <= total), fgm_joint_cdf_x2_s(model, x, total))

    def test_independence_reduces_to_building_block(self):
        model = FgmExponential(0.05, 0.25, 0.0)
        for x1, s in [(1.0, 3.0), (20.0, 50.0), (49.0, 50.0)]:
            assert fgm_joint_cdf_x1_s(model, x1, s) == pytest.approx(fgm_building_block(x1, s, 0.05, 0.25),
                                                                     abs=1e-14)

    def test_full_level_gives_aggregate_cdf(self):
        # at x1 = s the constraint X1 <= x1 is implied by S <= s
        model = FgmExponential(0.05, 0.25, 0.0)
        assert fgm_joint_cdf_x1_s(model, 50.0, 50.0) == pytest.approx(
            1.0 - (0.25 * math.exp(-2.5) - 0.05 * math.exp(-12.5)) / 0.2, abs=1e-12)

    def test_level_above_sum_rejected(self):
        with pytest.raises(DomainError):
            fgm_joint_cdf_x1_s(FgmExponential(0.05, 0.25, 0.3), 60.0, 50.0)


class TestMarshallOlkin:

    def test_properties(self):
        model = MarshallOlkin(0.1, 0.05, 0.25)
        assert model.total_rate == pytest.approx(0.4)
        assert model.pearson_correlation() == pytest.approx(0.25)
        assert model.marginal(0) == Exponential(0.15)
        assert model.swapped() == MarshallOlkin(0.1, 0.25, 0.05)
        assert not model.symmetric

    def test_joint_survival_matches_samples(self):
        model = MarshallOlkin(0.1, 0.05, 0.25)
        losses = _draw(model)
        for x1, x2 in [(2.0, 1.0), (5.0, 5.0), (1.0, 6.0)]:
            hits = (losses[:, 0] > x1) & (losses[:, 1] > x2)
            _assert_frequency(hits, model.joint_survival(x1, x2))

    def test_ties_from_common_shock(self):
        model = MarshallOlkin(0.2, 0.1, 0.3)
        losses = _draw(model)
        tie = np.mean(losses[:, 0] == losses[:, 1])
        assert tie == pytest.approx(0.2 / 0.6, abs=0.005)

    @pytest.mark.parametrize("params", [(0.1, 0.05, 0.25), (0.0, 0.05, 0.25), (0.02, 0.3, 0.1)])
    def test_cdf_with_sum_matches_samples(self, params):
        model = MarshallOlkin(*params)
        losses = _draw(model)
        s = losses.sum(axis=1)
        for x, total in [(3.0, 10.0), (8.0, 10.0), (20.0, 25.0)]:
            _assert_frequency((losses[:, 0] <= x) & (s <= total), mo_joint_cdf_x1_s(model, x, total))
            _assert_frequency((losses[:, 1] <= x) & (s <= total), mo_joint_cdf_x2_s(model, x, total))

    def test_singular_parameters(self):
        with pytest.raises(SingularParameters):
            MarshallOlkin(0.2, 0.05, 0.25)

    def test_symmetric_singular_allowed_but_not_evaluated(self):
        model = MarshallOlkin(0.0, 0.1, 0.1)
        assert model.symmetric and model.singular
        with pytest.raises(SingularParameters):
            mo_joint_cdf_x1_s(model, 1.0, 2.0)

    def test_no_shock_sampling(self):
        losses = _draw(MarshallOlkin(0.0, 0.05, 0.25), 1000)
        assert np.all(np.isfinite(losses))


class TestLowerProbabilities:

    def test_exponential_matches_samples(self):
        rates = (0.5, 1.0, 2.0)
        losses = _draw(IndependentExponential(rates))
        s = losses.sum(axis=1)
        u = 4.0
        for i, u_i in [(0, 2.0), (1, 1.0), (2, 0.3)]:
            _assert_frequency((losses[:, i] > u_i) & (s <= u), exp_joint_lower_prob(rates, i, u_i, u))

    def test_mixture_matches_samples(self):
        model = CorrelatedParetoMixture(2.5, 1.0, (1.0, 3.0))
        losses = _draw(model)
        s = losses.sum(axis=1)
        for i, u_i, u in [(0, 0.5, 2.0), (1, 0.2, 1.0)]:
            _assert_frequency((losses[:, i] > u_i) & (s <= u), mixture_joint_lower_prob(model, i, u_i, u))

    def test_concentrated_mixture_is_nearly_exponential(self):
        # Gamma(a, a) mixing collapses to 1 as a grows
        model = CorrelatedParetoMixture(1e4, 1e4, (1.0, 2.0))
        for i, u_i, u in [(0, 1.0, 2.0), (1, 0.3, 1.5), (0, 0.2, 4.0)]:
            assert mixture_joint_lower_prob(model, i, u_i, u) == pytest.approx(
                exp_joint_lower_prob((1.0, 2.0), i, u_i, u), abs=1e-3)

    def test_capital_above_total_rejected(self):
        with pytest.raises(DomainError):
            exp_joint_lower_prob((1.0, 2.0), 0, 3.0, 2.0)


class TestBuildModel:

    def test_kinds(self):
        assert build_model({"kind": "independent_exponential", "rates": [0.05, 0.25]}) == \
            IndependentExponential((0.05, 0.25))
        assert build_model({"kind": "fgm_exponential", "beta1": 0.05, "beta2": 0.25}).theta == 0.0
        comonotonic = build_model({"kind": "comonotonic", "marginals": [
            {"family": "exponential", "rate": 0.05}, {"family": "pareto", "shape": 2, "scale": 1}]})
        assert comonotonic.marginal(1) == ParetoLomax(2.0, 1.0)
        assert build_model({"kind": "pareto_mixture", "mix_shape": 2, "mix_rate": 1, "rates": [1, 2]}).dimension == 2

    def test_missing_parameter(self):
        with pytest.raises(DomainError, match="missing parameter"):
            build_model({"kind": "marshall_olkin", "lambda0": 0.1})

    def test_unknown_kind(self):
        with pytest.raises(DomainError, match="unknown model kind"):
            build_model({"kind": "gaussian"})

    def test_index_out_of_range(self):
        with pytest.raises(DomainError):
            IndependentExponential((1.0, 2.0)).marginal(2)


ORACLE_N = 10_000_000
ORACLE_CHUNK = 1_000_000


def _oracle_counts(model, events, seed):
    """Hit counts of each event over ORACLE_N draws, drawn chunk by chunk."""
    rng = np.random.default_rng(seed)
    counts = np.zeros(len(events), dtype=np.int64)
    for _ in range(ORACLE_N // ORACLE_CHUNK):
        losses = sample_matrix(model, rng, ORACLE_CHUNK)
        s = losses.sum(axis=1)
        counts += [np.count_nonzero(event(losses, s)) for event in events]
    return counts


def _assert_oracle(counts, expected):
    """Each frequency within four standard errors of its closed form."""
    for hits, p in zip(counts, expected):
        se = math.sqrt(max(p * (1.0 - p), 1e-12) / ORACLE_N)
        assert abs(hits / ORACLE_N - p) <= 4.0 * se + 1e-12


def _lower_event(i, u_i, u):
    return lambda losses, s: (losses[:, i] > u_i) & (s <= u)


def _cdf_event(i, x, total):
    return lambda losses, s: (losses[:, i] <= x) & (s <= total)


@pytest.mark.slow
class TestClosedFormsAgainstLargeSimulation:

    def test_exponential_lower_probability(self):
        rates = (0.5, 1.0, 2.0)
        points = [(0, 1.0, 4.0), (1, 0.5, 3.0), (2, 0.2, 2.0), (0, 3.0, 5.0), (1, 1.0, 6.0)]
        counts = _oracle_counts(IndependentExponential(rates), [_lower_event(*p) for p in points], seed=101)
        _assert_oracle(counts, [exp_joint_lower_prob(rates, *p) for p in points])

    def test_fgm_cdf_with_sum(self):
        model = FgmExponential(0.05, 0.25, 0.6)
        points = [(10.0, 30.0), (35.0, 50.0), (5.0, 5.0), (20.0, 25.0), (2.0, 60.0)]
        counts = _oracle_counts(model, [_cdf_event(0, *p) for p in points], seed=102)
        _assert_oracle(counts, [fgm_joint_cdf_x1_s(model, *p) for p in points])

    @pytest.mark.parametrize("params", [(0.1, 0.05, 0.1), (0.02, 0.03, 0.23)])
    def test_marshall_olkin_cdf_with_sum(self, params):
        model = MarshallOlkin(*params)
        points = [(10.0, 25.0), (5.0, 10.0), (20.0, 40.0), (1.0, 30.0), (15.0, 15.0)]
        counts = _oracle_counts(model, [_cdf_event(0, *p) for p in points], seed=103)
        _assert_oracle(counts, [mo_joint_cdf_x1_s(model, *p) for p in points])

    def test_mixture_lower_probability(self):
        model = CorrelatedParetoMixture(3.0, 2.0, (1.0, 2.0))
        points = [(0, 0.5, 2.0), (1, 0.3, 1.0), (0, 1.0, 3.0), (1, 0.1, 0.5), (0, 2.0, 2.5)]
        counts = _oracle_counts(model, [_lower_event(*p) for p in points], seed=104)
        _assert_oracle(counts, [mixture_joint_lower_prob(model, *p) for p in points])
