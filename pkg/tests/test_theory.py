import json

import numpy as np
import pytest

from fmore.auction import CostModel, ScoringRule
from fmore.theory import (DOCUMENTED, FAIL, PASS, CheckReport, Game, check_fill_probability, check_nash,
                          check_pareto, check_profit_monotonic_in_k, check_resource_ratio, check_separability,
                          check_uniform_selection, check_win_probability, reports_json, run_suite, suite_ok)

GAME = Game.sqrt_linear()


@pytest.fixture(scope="module")
def quick_suite():
    return run_suite(seed=0, quick=True)


def test_quick_suite_all_as_expected(quick_suite):
    bad = [(r.name, r.verdict, r.expect) for r in quick_suite if not r.ok]
    assert not bad
    assert suite_ok(quick_suite)


def test_suite_names_unique_and_controls_present(quick_suite):
    names = [r.name for r in quick_suite]
    assert len(names) == len(set(names))
    assert sum(r.expect == "fail" for r in quick_suite) >= 6
    assert all(r.verdict == FAIL for r in quick_suite if r.expect == "fail")


def test_report_json_is_strict(quick_suite):
    text = reports_json(quick_suite)
    parsed = json.loads(text)
    assert [p["name"] for p in parsed] == [r.name for r in quick_suite]
    for p in parsed:
        assert {"estimate", "se", "tolerance", "verdict", "seed", "ok"} <= set(p)


class TestReport:
    def test_ok_semantics(self):
        mk = lambda verdict, expect: CheckReport("x", "c", 0.0, 0.0, 0.0, verdict, 0, expect)
        assert mk(PASS, "pass").ok and not mk(FAIL, "pass").ok
        assert mk(FAIL, "fail").ok and not mk(PASS, "fail").ok
        assert mk(DOCUMENTED, "documented").ok

    def test_non_finite_serialized_as_text(self):
        r = CheckReport("x", "c", float("inf"), np.float64(np.nan), 0.0, PASS, 0, details={"a": np.arange(2)})
        d = json.loads(reports_json([r]))[0]
        assert d["estimate"] == "inf" and d["se"] == "nan" and d["details"]["a"] == [0, 1]


class TestIndividualChecks:
    def test_nash_and_its_control(self):
        thetas = [1.2, 1.6]
        assert check_nash(GAME, thetas, 5, 2, 4000, 1).verdict == PASS
        assert check_nash(GAME, thetas, 5, 2, 4000, 1, perturb=1.5, expect="fail").verdict == FAIL

    def test_nash_reproducible(self):
        a = check_nash(GAME, [1.3], 5, 1, 2000, 7)
        b = check_nash(GAME, [1.3], 5, 1, 2000, 7)
        assert a.to_dict() == b.to_dict()

    def test_profit_rises_with_k(self):
        assert check_profit_monotonic_in_k(GAME, (1, 2, 4), 10, 1.2, 5000, 0).verdict == PASS

    def test_uniform_selection_and_control(self):
        assert check_uniform_selection(6, 2, (0.5, 1.0), 3000, 0).verdict == PASS
        assert check_uniform_selection(6, 2, (1.0,), 1000, 0, heterogeneous=True).verdict == FAIL

    def test_separability_and_control(self):
        assert check_separability(GAME, [1.1, 1.7], 200, 0).verdict == PASS
        assert check_separability(GAME, [1.1, 1.7], 200, 0, quality_override=np.array([2.0])).verdict == FAIL

    @pytest.mark.parametrize("alphas,betas", [((0.5, 0.5), (0.5, 0.5)), ((0.75, 0.25), (0.5, 0.5))])
    def test_resource_ratio(self, alphas, betas):
        r = check_resource_ratio(alphas, betas, 1.0, 1.0)
        assert r.verdict == PASS
        q = r.details["numerical"]
        assert q[0] / q[1] == pytest.approx(alphas[0] / alphas[1] * betas[1] / betas[0], rel=1e-4)
        # the budget is spent in proportion to the exponents: b_i q_i = a_i / sum(a)
        assert np.asarray(betas) * q == pytest.approx(np.asarray(alphas) / sum(alphas), rel=1e-4)

    def test_resource_ratio_control(self):
        assert check_resource_ratio((0.75, 0.25), (0.3, 0.7), 1.0, 1.0, ignore_costs=True).verdict == FAIL

    def test_pareto_and_control(self):
        rule = ScoringRule.additive(0.5, 0.5)
        cm = CostModel(1.0, GAME.dist, "power_separable", (0.5, 0.8), (2.0, 2.0))
        box = ((0.0, 2.0), (0.0, 2.0))
        assert check_pareto(rule, cm, [1.2, 1.5], box).verdict == PASS
        assert check_pareto(rule, cm, [1.2, 1.5], box, perturb_index=0).verdict == FAIL

    def test_win_probability_documents_verbatim_divergence(self):
        r = check_win_probability(3, 3, 0.5, 2000, 0)
        assert r.verdict == DOCUMENTED
        assert r.details["verbatim_sum"] == pytest.approx(0.75)
        assert r.details["order_statistics"] == pytest.approx(1.0)

    def test_fill_probability_documents_verbatim_divergence(self):
        r = check_fill_probability(5, 3, 0.5, 20000, 0)
        assert r.verdict == DOCUMENTED
        assert r.details["negative_binomial"] == pytest.approx(0.5)
        assert r.details["verbatim_sum"] == pytest.approx(0.6875)
