"""Symmetric equilibrium bidding for the K-winner first-score auction.

A node of type ``theta`` offers ``q_s(theta) = argmax s(q) - c(q, theta)`` over
its quality box and asks

    p_s(theta) = c(q_s, theta) + int_0^u g(x) / g(u) dx,   u = s(q_s) - c(q_s, theta)

where ``g`` is the probability of landing in the top K given that a fraction
``H(u)`` of the other nodes has a lower maximum score. The integral is taken
with a fixed-step Euler (left rectangle) rule; a trapezoid value and the
linear-ODE form are kept alongside as cross-checks.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import comb

from .auction import ConfigError, CostKind, CostModel, RuleKind, ScoringRule, WinProbMode

logger = logging.getLogger(__name__)

Box = Sequence[tuple[float, float]]

DEFAULT_GRID = 1024
DEFAULT_EULER_STEPS = 10_000


def _check_box(box: Optional[Box], m: int) -> np.ndarray:
    if box is None:
        raise ConfigError("a bounded quality box is required to locate the optimal quality")
    b = np.asarray(box, dtype=float).reshape(-1, 2)
    if b.shape[0] != m:
        raise ConfigError(f"quality box has {b.shape[0]} dimensions, rule has {m}")
    if not np.all(np.isfinite(b)):
        raise ConfigError("quality box must be finite; objective may be unbounded otherwise")
    if np.any(b[:, 0] < 0) or np.any(b[:, 1] < b[:, 0]):
        raise ConfigError(f"invalid quality box {b.tolist()}")
    return b


def _refine_1d(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n_grid: int = 257) -> float:
    if hi == lo:
        return lo
    xs = np.linspace(lo, hi, n_grid)
    vals = f(xs)
    i = int(np.argmax(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n_grid - 1)]
    res = optimize.minimize_scalar(lambda x: -float(f(np.array([x]))[0]), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-12 * max(1.0, hi)})
    best = xs[i]
    if res.success and -res.fun >= vals[i]:
        best = float(res.x)
    return float(best)


def optimal_quality(rule: ScoringRule, cost_model: CostModel, box: Box,
                    theta: Optional[float] = None) -> np.ndarray:
    """Quality maximizing ``s(q) - c(q, theta)`` over the box.

    Separable rules are solved coordinate-wise; everything else uses a
    vectorized grid search followed by a bounded quasi-Newton polish.
    """
    theta = cost_model.theta if theta is None else float(theta)
    if rule.m != cost_model.m:
        raise ConfigError("rule and cost model dimensions differ")
    b = _check_box(box, rule.m)

    def objective(q):
        return rule.s(q) - theta * cost_model.unit_cost(q)

    if rule.separable:
        q = b[:, 0].copy()
        for i in range(rule.m):
            def f(xs, i=i):
                Q = np.repeat(q[None, :], len(xs), axis=0)
                Q[:, i] = xs
                return np.atleast_1d(objective(Q))
            q[i] = _refine_1d(f, b[i, 0], b[i, 1])
        return q

    if rule.kind is RuleKind.SCALED_PRODUCT and cost_model.kind is CostKind.ADDITIVE_LINEAR:
        # multilinear objective: optimum sits on a vertex of the box cut at the clamp points
        cand = []
        for i, (lo, hi) in enumerate(b):
            pts = {lo, hi}
            if rule.normalization is not None:
                pts |= {min(max(v, lo), hi) for v in (rule.normalization.lo[i], rule.normalization.hi[i])}
            cand.append(sorted(pts))
        mesh = np.stack(np.meshgrid(*cand, indexing="ij"), axis=-1).reshape(-1, rule.m)
        return mesh[int(np.argmax(objective(mesh)))].astype(float)

    n = max(5, min(257, int(round(40_000 ** (1.0 / rule.m)))))
    axes = [np.linspace(lo, hi, n) for lo, hi in b]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, rule.m)
    vals = objective(mesh)
    best = mesh[int(np.argmax(vals))]
    best_val = float(np.max(vals))
    res = optimize.minimize(lambda x: -float(objective(x)), best, method="L-BFGS-B", bounds=b.tolist())
    if res.success and -res.fun > best_val:
        best = np.clip(res.x, b[:, 0], b[:, 1])
    return np.asarray(best, dtype=float)


def max_score_u(rule: ScoringRule, cost_model: CostModel, box: Box, theta: Optional[float] = None) -> float:
    """Maximum surplus ``u(theta) = s(q_s) - c(q_s, theta)``."""
    theta = cost_model.theta if theta is None else float(theta)
    q = optimal_quality(rule, cost_model, box, theta)
    return float(rule.s(q) - cost_model(q, theta))


def winning_probability_g(h, n_nodes: int, n_winners: int,
                          mode: WinProbMode = WinProbMode.ORDER_STATISTICS):
    """Win probability as a function of ``H`` (share of rivals scoring lower).

    ``verbatim_sum`` sums ``(1-H)^(i-1) H^(N-i)`` for ``i = 1..K`` verbatim;
    ``order_statistics`` weights each term by ``C(N-1, i-1)``, i.e. the
    probability that at most ``K - 1`` of ``N - 1`` i.i.d. rivals beat us.
    """
    mode = WinProbMode(mode)
    if not 1 <= n_winners <= n_nodes:
        raise ConfigError("need 1 <= K <= N")
    h = np.asarray(h, dtype=float)
    i = np.arange(1, n_winners + 1).reshape((-1,) + (1,) * h.ndim)
    terms = (1.0 - h) ** (i - 1) * h ** (n_nodes - i)
    if mode is WinProbMode.ORDER_STATISTICS:
        terms = comb(n_nodes - 1, i - 1) * terms
    out = terms.sum(axis=0)
    return float(out) if out.ndim == 0 else out


class ScoreDistribution:
    """Distribution ``H`` of the maximum surplus ``u`` across node types.

    Built either from a tabulated type map ``theta -> X(theta)`` (``from_types``)
    or from a sample of surpluses (``from_samples``). ``H(x) = 1 - F(X^-1(x))``
    is evaluated by piecewise-linear inversion of the table.
    """

    def __init__(self, u_knots: np.ndarray, h_knots: np.ndarray,
                 theta_grid: Optional[np.ndarray] = None, qualities: Optional[np.ndarray] = None):
        order = np.argsort(u_knots, kind="stable")
        self.u_knots = np.asarray(u_knots, dtype=float)[order]
        self.h_knots = np.maximum.accumulate(np.asarray(h_knots, dtype=float)[order])
        self.theta_grid = theta_grid
        self.qualities = qualities
        self._u_by_theta = None if theta_grid is None else np.asarray(u_knots, dtype=float)

    @classmethod
    def from_types(cls, rule: ScoringRule, cost_model: CostModel, box: Box,
                   n_grid: int = DEFAULT_GRID) -> "ScoreDistribution":
        dist = cost_model.dist
        thetas = np.linspace(dist.lo, dist.hi, n_grid)
        qs = np.array([optimal_quality(rule, cost_model, box, t) for t in thetas])
        u = rule.s(qs) - thetas * cost_model.unit_cost(qs)
        u = np.minimum.accumulate(np.atleast_1d(u))  # X is nonincreasing; absorb optimizer jitter
        h = 1.0 - dist.cdf(thetas)
        return cls(u, h, theta_grid=thetas, qualities=qs)

    @classmethod
    def from_samples(cls, samples) -> "ScoreDistribution":
        u = np.sort(np.asarray(samples, dtype=float).ravel())
        if u.size < 2:
            raise ConfigError("need at least two surplus samples")
        return cls(u, np.linspace(0.0, 1.0, u.size))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.u_knots[0]), float(self.u_knots[-1])

    def H(self, x):
        out = np.interp(x, self.u_knots, self.h_knots, left=0.0, right=1.0)
        return float(out) if np.ndim(out) == 0 else out

    def X(self, theta):
        if self.theta_grid is None:
            raise ValueError("distribution was not built from a type grid")
        return np.interp(theta, self.theta_grid, self._u_by_theta)

    def quality(self, theta) -> np.ndarray:
        if self.qualities is None:
            raise ValueError("distribution was not built from a type grid")
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.stack([np.interp(th, self.theta_grid, self.qualities[:, j])
                         for j in range(self.qualities.shape[1])], axis=-1)


@dataclass(frozen=True)
class Markup:
    value: float
    trapezoid: float
    ode: float
    step_h: float
    n_steps: int
    degenerate: bool


def equilibrium_markup(u: float, dist: ScoreDistribution, n_nodes: int, n_winners: int,
                       mode: WinProbMode = WinProbMode.ORDER_STATISTICS,
                       step_h: Optional[float] = None) -> Markup:
    """Informational rent ``int_0^u g(x)/g(u) dx`` for a node with surplus ``u``.

    ``value`` is the left-rectangle Euler sum with step ``<= step_h`` (default
    ``u / 10^4``). ``ode`` integrates ``(b g)' = x g'(x)``, ``b(0) = 0`` with
    the same step and returns ``u - b(u)``.
    """
    if u <= 0:
        return Markup(0.0, 0.0, 0.0, 0.0, 0, False)
    if step_h is None:
        step_h = u / DEFAULT_EULER_STEPS
    if not step_h > 0:
        raise ConfigError("step_h must be > 0")
    n = max(1, int(math.ceil(u / step_h - 1e-9)))
    h = u / n
    x = np.arange(n + 1) * h
    gx = winning_probability_g(dist.H(x), n_nodes, n_winners, mode)
    g_u = float(gx[-1])
    if g_u <= 0.0:
        # only the worst type can have zero win probability; its rent is zero in the limit
        return Markup(0.0, 0.0, 0.0, h, n, True)
    euler = h * float(gx[:-1].sum()) / g_u
    trap = float(integrate.trapezoid(gx, x)) / g_u
    # midpoint Stieltjes sum for int x dg: second order, unlike the Euler sum
    z = float(np.sum((x[:-1] + 0.5 * h) * np.diff(gx)))
    ode = u - z / g_u
    return Markup(euler, trap, ode, h, n, False)


@dataclass(frozen=True)
class EquilibriumStrategy:
    theta: float
    quality: np.ndarray
    payment: float
    cost: float
    max_score: float
    markup: float
    markup_trapezoid: float
    markup_ode: float
    step_h: float
    n_steps: int
    grid_size: int
    degenerate: bool
    mode: WinProbMode

    @property
    def score(self) -> float:
        return self.max_score - self.markup


def equilibrium_payment(rule: ScoringRule, cost_model: CostModel, theta: float, n_nodes: int,
                        n_winners: int, box: Box, step_h: Optional[float] = None,
                        mode: WinProbMode = WinProbMode.ORDER_STATISTICS,
                        dist: Optional[ScoreDistribution] = None,
                        n_grid: int = DEFAULT_GRID) -> EquilibriumStrategy:
    """Equilibrium bid ``(q_s(theta), p_s(theta))`` for one type."""
    if dist is None:
        dist = ScoreDistribution.from_types(rule, cost_model, box, n_grid)
    q = optimal_quality(rule, cost_model, box, theta)
    c = float(cost_model(q, theta))
    u = float(rule.s(q)) - c
    mk = equilibrium_markup(u, dist, n_nodes, n_winners, mode, step_h)
    grid = 0 if dist.theta_grid is None else len(dist.theta_grid)
    return EquilibriumStrategy(float(theta), q, c + mk.value, c, u, mk.value, mk.trapezoid, mk.ode,
                               mk.step_h, mk.n_steps, grid, mk.degenerate, WinProbMode(mode))


def theta_domain_payment(rule: ScoringRule, cost_model: CostModel, theta: float, n_nodes: int,
                         n_winners: int, box: Box,
                         mode: WinProbMode = WinProbMode.ORDER_STATISTICS) -> float:
    """Payment from the type-space integral, by adaptive quadrature.

    ``c(q_s, theta) + int_theta^hi c_theta(q_s(t), t) g(1-F(t)) / g(1-F(theta)) dt``.
    With K = 1 this is Che's one-winner formula; with the verbatim sum and
    K = 2 it reduces to the ``(..)^(N-2)`` two-winner form. It never touches
    ``H`` or the Euler grid, so it is an independent check on them.
    """
    dist = cost_model.dist
    q0 = optimal_quality(rule, cost_model, box, theta)
    c0 = float(cost_model(q0, theta))
    g0 = winning_probability_g(1.0 - dist.cdf(theta), n_nodes, n_winners, mode)
    if theta >= dist.hi or g0 <= 0:
        return c0

    def integrand(t):
        qt = optimal_quality(rule, cost_model, box, t)
        return float(cost_model.unit_cost(qt)) * winning_probability_g(1.0 - dist.cdf(t), n_nodes, n_winners, mode) / g0

    return c0 + _quad(integrand, theta, dist.hi)


def che_payment(rule: ScoringRule, cost_model: CostModel, theta: float, n_nodes: int, box: Box,
                n_winners: int = 1) -> float:
    """Closed-form first-price payment for one or two winners (exponent N-K)."""
    if n_winners not in (1, 2):
        raise ValueError("closed form exists for one or two winners only")
    dist = cost_model.dist
    q0 = optimal_quality(rule, cost_model, box, theta)
    c0 = float(cost_model(q0, theta))
    tail = 1.0 - float(dist.cdf(theta))
    if tail <= 0:
        return c0
    power = n_nodes - n_winners

    def integrand(t):
        qt = optimal_quality(rule, cost_model, box, t)
        return float(cost_model.unit_cost(qt)) * ((1.0 - float(dist.cdf(t))) / tail) ** power

    return c0 + _quad(integrand, theta, dist.hi)


def _quad(f, a: float, b: float) -> float:
    # the integrand carries ~1e-8 optimizer noise; quad flags that as round-off
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, epsabs=1e-11, epsrel=1e-9, limit=200)
    return float(val)


class StrategyTable:
    """Equilibrium strategy tabulated over the type grid.

    Used to play the opponents in Monte Carlo checks. The rent integral is
    accumulated once on a shared fine grid of surpluses.
    """

    def __init__(self, dist: ScoreDistribution, rule: ScoringRule, cost_model: CostModel,
                 n_nodes: int, n_winners: int, mode: WinProbMode = WinProbMode.ORDER_STATISTICS,
                 n_fine: int = 1 << 17):
        if dist.theta_grid is None:
            raise ValueError("strategy table needs a type-grid distribution")
        self.dist = dist
        self.n_nodes = n_nodes
        self.n_winners = n_winners
        self.mode = WinProbMode(mode)
        self.theta = dist.theta_grid
        self.quality = dist.qualities
        self.u = dist.X(self.theta)
        self.cost = self.theta * cost_model.unit_cost(self.quality)
        self.markup = markup_curve(self.u, dist, n_nodes, n_winners, mode, n_fine)
        self.payment = self.cost + self.markup
        self.bid_score = self.u - self.markup

    @classmethod
    def build(cls, rule: ScoringRule, cost_model: CostModel, box: Box, n_nodes: int, n_winners: int,
              mode: WinProbMode = WinProbMode.ORDER_STATISTICS, n_grid: int = DEFAULT_GRID) -> "StrategyTable":
        dist = ScoreDistribution.from_types(rule, cost_model, box, n_grid)
        return cls(dist, rule, cost_model, n_nodes, n_winners, mode)

    def score_of(self, theta):
        return np.interp(theta, self.theta, self.bid_score)

    def payment_of(self, theta):
        return np.interp(theta, self.theta, self.payment)

    def markup_of(self, theta):
        return np.interp(theta, self.theta, self.markup)


def markup_curve(u, dist: ScoreDistribution, n_nodes: int, n_winners: int,
                 mode: WinProbMode = WinProbMode.ORDER_STATISTICS, n_fine: int = 1 << 17) -> np.ndarray:
    """Vectorized rent for many surpluses via one cumulative Euler sum."""
    u = np.asarray(u, dtype=float)
    top = float(max(np.max(u), 0.0))
    if top == 0.0:
        return np.zeros_like(u)
    x = np.linspace(0.0, top, n_fine + 1)
    gx = winning_probability_g(dist.H(x), n_nodes, n_winners, mode)
    cum = np.concatenate([[0.0], np.cumsum(gx[:-1]) * (x[1] - x[0])])
    num = np.interp(np.maximum(u, 0.0), x, cum)
    den = winning_probability_g(dist.H(np.maximum(u, 0.0)), n_nodes, n_winners, mode)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.where(u > 0, out, 0.0)


@dataclass(frozen=True)
class BestResponse:
    payments: np.ndarray
    profit: np.ndarray
    se: np.ndarray
    win_rate: np.ndarray
    best_index: int
    quality: np.ndarray
    cost: float
    seed: int

    @property
    def best_payment(self) -> float:
        return float(self.payments[self.best_index])


def best_response_oracle(rule: ScoringRule, cost_model: CostModel, theta: float, n_nodes: int,
                         n_winners: int, box: Box, opponents: Callable[[np.ndarray], np.ndarray],
                         payment_grid, mc_samples: int, seed: int) -> BestResponse:
    """Monte Carlo expected profit ``(p - c) * P(win)`` over a payment grid.

    The focal node offers ``q_s(theta)``. Each sample draws ``N - 1`` rival
    types from the prior and maps them through ``opponents`` (type -> bid
    score). The same draws are reused for every grid payment, so the output
    does not depend on the order in which grid points are evaluated.
    """
    if mc_samples < 100:
        raise ValueError("mc_samples < 100 is statistically meaningless")
    rng = np.random.default_rng(seed)
    q = optimal_quality(rule, cost_model, box, theta)
    c = float(cost_model(q, theta))
    sq = float(rule.s(q))
    payments = np.asarray(payment_grid, dtype=float)
    n_rivals = n_nodes - 1
    rivals = opponents(cost_model.dist.sample(rng, (mc_samples, n_rivals)))
    coin = rng.random(mc_samples)
    if n_rivals >= n_winners:
        # K-th best rival score per sample; we win iff we beat it
        kth = -np.partition(-rivals, n_winners - 1, axis=1)[:, n_winners - 1]
    else:
        kth = np.full(mc_samples, -np.inf)
    profit = np.empty(payments.size)
    se = np.empty(payments.size)
    win_rate = np.empty(payments.size)
    for j, p in enumerate(payments):
        s_bid = sq - p
        win = (s_bid > kth) | ((s_bid == kth) & (coin < 0.5))
        gain = (p - c) * win
        profit[j] = gain.mean()
        se[j] = gain.std(ddof=1) / math.sqrt(mc_samples)
        win_rate[j] = win.mean()
    return BestResponse(payments, profit, se, win_rate, int(np.argmax(profit)), q, c, seed)
