import numpy as np
import pytest

from fmore.auction import CostModel, ScoringRule, ThetaDistribution
from fmore.config import ExperimentConfig, apply_overrides


@pytest.fixture
def unit_prior():
    return ThetaDistribution(1.0, 2.0)


@pytest.fixture
def sqrt_game(unit_prior):
    """s = 2 sqrt(q), c = theta q, theta ~ U[1, 2], quality box [0, 4]."""
    return ScoringRule.cobb_douglas(0.5, scale=2.0), CostModel(1.0, unit_prior), [(0.0, 4.0)]


@pytest.fixture
def small_cfg():
    """A federated task small enough for unit tests."""
    return apply_overrides(ExperimentConfig(), [
        "auction.n_nodes=12", "auction.n_winners=4", "fl.n_samples=2400", "fl.n_features=8",
        "fl.rounds=4", "fl.prior_draws=4", "seeds=[0, 1]",
    ])


def sqrt_game_payment_oracle(theta, n_nodes, power=None, hi=2.0):
    """Independent closed form for s = 2 sqrt(q), c = theta q, uniform [1, hi].

    q_s(t) = 1/t^2 and c(q_s(t), t) = 1/t, so the first-price payment is
    1/theta + int_theta^hi t^-2 ((hi - t)/(hi - theta))^power dt.
    """
    from scipy import integrate
    power = n_nodes - 1 if power is None else power
    if theta >= hi:
        return 1.0 / theta
    val, _ = integrate.quad(lambda t: t ** -2 * ((hi - t) / (hi - theta)) ** power, theta, hi,
                            epsabs=1e-13, epsrel=1e-12)
    return 1.0 / theta + val


@pytest.fixture
def payment_oracle():
    return sqrt_game_payment_oracle


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def report_criterion(request):
    """Record one pass/fail line per acceptance criterion and assert it."""
    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        request.config.stash.setdefault(ACCEPTANCE_LINES, []).append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
