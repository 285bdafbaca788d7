import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmore.auction import (AuctionConfig, Bid, ConfigError, CostModel, NormalizationSpec, QualityVector,
                           ScoringRule, ThetaDistribution, as_quality, cost, score, utility)

WALK_NORM = NormalizationSpec(lo=(1000.0, 5.0), hi=(5000.0, 100.0))
WALK_RULE = ScoringRule.min_weighted(0.5, 0.5, normalization=WALK_NORM)
PRIOR = ThetaDistribution(1.0, 2.0)


def bid(q, p, node="n"):
    return Bid(node, QualityVector(tuple(q)), p)


class TestQualityAndBid:
    def test_rejects_negative_or_nonfinite(self):
        with pytest.raises(ConfigError):
            QualityVector((1.0, -0.1))
        with pytest.raises(ConfigError):
            QualityVector((math.inf,))
        with pytest.raises(ConfigError):
            QualityVector(())

    def test_bid_payment_must_be_finite_nonnegative(self):
        with pytest.raises(ConfigError):
            bid((1.0,), -1.0)
        with pytest.raises(ConfigError):
            bid((1.0,), math.nan)

    def test_as_quality_passthrough(self):
        q = QualityVector((1.0, 2.0))
        assert as_quality(q) is q
        assert as_quality([1, 2]).values == (1.0, 2.0)


class TestScore:
    def test_walkthrough_node_a(self):
        assert score(WALK_RULE, bid((4000, 85), 0.20)) == pytest.approx(0.175, abs=1e-12)

    def test_walkthrough_node_e(self):
        assert score(WALK_RULE, bid((5000, 100), 0.20)) == pytest.approx(0.300, abs=1e-12)

    def test_walkthrough_round_two_node_c(self):
        expected = min(0.5 * 0.75, 0.5 * 75 / 95) - 0.15
        assert score(WALK_RULE, bid((4000, 80), 0.15)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.225, abs=1e-12)

    def test_additive_zero(self):
        assert score(ScoringRule.additive(1, 1, 1), bid((0, 0, 0), 0.0)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            score(ScoringRule.additive(1, 1), bid((1, 2, 3), 0.0))

    def test_cobb_douglas_zero_component_is_zero(self):
        assert score(ScoringRule.cobb_douglas(0.5, 0.5), bid((0.0, 9.0), 0.0)) == 0.0

    def test_out_of_range_quality_is_clamped(self):
        over = score(WALK_RULE, bid((9000, 500), 0.0))
        cap = score(WALK_RULE, bid((5000, 100), 0.0))
        assert over == cap == pytest.approx(0.5)

    def test_payment_normalization_flag(self):
        norm = NormalizationSpec(lo=(0.0,), hi=(10.0,), normalize_payment=True, payment_range=(0.0, 2.0))
        rule = ScoringRule.additive(1.0, normalization=norm)
        assert score(rule, bid((5.0,), 1.0)) == pytest.approx(0.5 - 0.5)

    def test_scaled_product(self):
        rule = ScoringRule.scaled_product(25.0)
        assert rule.s([2.0, 0.5]) == pytest.approx(25.0)

    def test_scale_multiplies_s(self):
        assert ScoringRule.cobb_douglas(0.5, scale=2.0).s([9.0]) == pytest.approx(6.0)

    @pytest.mark.parametrize("alphas", [(0.0, 1.0), (-1.0,), ()])
    def test_bad_coefficients(self, alphas):
        with pytest.raises(ConfigError):
            ScoringRule.additive(*alphas)

    def test_round_trip_dict(self):
        assert ScoringRule.from_dict(WALK_RULE.to_dict()) == WALK_RULE

    @settings(max_examples=200, deadline=None)
    @given(q=st.lists(st.floats(0, 1e4), min_size=2, max_size=2), p=st.floats(0, 10),
           kind=st.sampled_from(["additive", "min_weighted", "cobb_douglas", "scaled_product"]))
    def test_quasi_linear(self, q, p, kind):
        rule = ScoringRule(kind, (0.4, 0.6))
        assert score(rule, bid(q, p)) == pytest.approx(rule.s(q) - p, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(q=st.lists(st.floats(0, 100), min_size=2, max_size=2),
           dq=st.lists(st.floats(0, 10), min_size=2, max_size=2),
           p=st.floats(0, 10), dp=st.floats(0, 10),
           kind=st.sampled_from(["additive", "min_weighted", "cobb_douglas", "scaled_product"]))
    def test_monotone_in_quality_and_payment(self, q, dq, p, dp, kind):
        rule = ScoringRule(kind, (0.5, 0.5))
        base = score(rule, bid(q, p))
        more_q = score(rule, bid(np.add(q, dq), p))
        more_p = score(rule, bid(q, p + dp))
        assert more_q >= base - 1e-9 * max(1.0, abs(base))
        assert more_p <= base + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(q=st.lists(st.floats(-1e5, 1e5), min_size=2, max_size=2))
    def test_normalized_values_in_unit_interval(self, q):
        z = WALK_NORM.quality(np.array(q))
        assert np.all((z >= 0) & (z <= 1))


class TestCost:
    def test_additive_linear_examples(self):
        assert cost(CostModel(2.0, PRIOR, "additive_linear", (0.6, 0.4)), (1, 1)) == pytest.approx(2.0)
        assert cost(CostModel(0.8, PRIOR, "additive_linear", (0.5, 0.5)), (2, 4)) == pytest.approx(2.4)

    def test_power_separable(self):
        assert cost(CostModel(1.0, PRIOR, "power_separable", (1.0,), (2.0,)), (3,)) == pytest.approx(9.0)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            CostModel(0.0, PRIOR)
        with pytest.raises(ConfigError):
            CostModel(1.0, PRIOR, "power_separable", (1.0,), (0.5,))

    @settings(max_examples=200, deadline=None)
    @given(q=st.lists(st.floats(0, 50), min_size=2, max_size=2), i=st.integers(0, 1),
           dq=st.floats(1e-3, 5), t_lo=st.floats(0.1, 5), dt=st.floats(1e-3, 5),
           kind=st.sampled_from(["additive_linear", "power_separable"]))
    def test_monotone_and_single_crossing(self, q, i, dq, t_lo, dt, kind):
        cm = CostModel(1.0, PRIOR, kind, (0.7, 1.3), (1.5, 2.0) if kind == "power_separable" else ())
        q0 = np.array(q)
        q1 = q0.copy()
        q1[i] += dq
        t_hi = t_lo + dt
        d_lo = cm(q1, t_lo) - cm(q0, t_lo)
        d_hi = cm(q1, t_hi) - cm(q0, t_hi)
        assert d_lo >= 0
        assert cm(q0, t_hi) >= cm(q0, t_lo)
        assert d_hi >= d_lo - 1e-9 * max(1.0, d_hi)


class TestUtility:
    def test_examples(self):
        assert utility(ScoringRule.additive(1, 1), (2, 3)) == pytest.approx(5.0)
        assert utility(ScoringRule.cobb_douglas(0.5, 0.5), (4, 9)) == pytest.approx(6.0)
        assert utility(ScoringRule.min_weighted(1, 1), (0, 7)) == 0.0


class TestThetaDistribution:
    def test_uniform_cdf_ppf(self):
        assert PRIOR.cdf(1.0) == 0.0 and PRIOR.cdf(2.0) == 1.0
        assert PRIOR.ppf(0.25) == pytest.approx(1.25)

    def test_truncnorm_support(self, rng):
        d = ThetaDistribution(1.0, 2.0, "truncnorm", 1.5, 0.3)
        x = d.sample(rng, 1000)
        assert np.all((x >= 1.0) & (x <= 2.0))
        assert d.cdf(1.0) == pytest.approx(0.0) and d.cdf(2.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("lo,hi", [(0.0, 1.0), (2.0, 1.0), (1.0, math.inf)])
    def test_bad_support(self, lo, hi):
        with pytest.raises(ConfigError):
            ThetaDistribution(lo, hi)


class TestAuctionConfig:
    @pytest.mark.parametrize("n,k,psi", [(1, 1, 1.0), (5, 6, 1.0), (5, 0, 1.0), (5, 2, 0.0), (5, 2, 1.5)])
    def test_invalid(self, n, k, psi):
        with pytest.raises(ConfigError):
            AuctionConfig(n, k, WALK_RULE, psi)
