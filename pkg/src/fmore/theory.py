"""Executable checks of the mechanism's equilibrium and selection properties.

Every check returns a :class:`CheckReport` carrying an estimate, its standard
error, the tolerance used, the seed and a verdict. ``expect`` says what the
verdict should be: ``"pass"`` for the claim itself, ``"fail"`` for negative
controls (which show the check can fail) and ``"documented"`` for known
divergences that are recorded but never fail the suite.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy import optimize

from .auction import (AuctionConfig, Bid, CostModel, QualityVector, ScoringRule, ThetaDistribution,
                      WinProbMode, score)
from .equilibrium import (Box, StrategyTable, best_response_oracle, che_payment,
                          equilibrium_payment, optimal_quality, winning_probability_g)
from .mechanism import (Blacklist, determine_winners, fill_probability, fill_probability_negbin,
                        select_ranked, settle, simulate_fill_frequency)

logger = logging.getLogger(__name__)

PASS, FAIL, DOCUMENTED = "PASS", "FAIL", "DOCUMENTED"


@dataclass
class CheckReport:
    name: str
    claim: str
    estimate: float
    se: float
    tolerance: float
    verdict: str
    seed: Optional[int]
    expect: str = "pass"
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """True when the verdict is what the suite expects of this check."""
        if self.expect == "documented":
            return True
        return self.verdict == (PASS if self.expect == "pass" else FAIL)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["ok"] = self.ok
        return _clean(d)


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def reports_json(reports: Sequence[CheckReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"


@dataclass(frozen=True)
class Game:
    """Single-dimension benchmark: ``s = scale * q^a``, ``c = theta * q``."""

    rule: ScoringRule
    cost_model: CostModel
    box: tuple

    @classmethod
    def sqrt_linear(cls, lo: float = 1.0, hi: float = 2.0, q_max: float = 4.0) -> "Game":
        dist = ThetaDistribution(lo, hi)
        return cls(ScoringRule.cobb_douglas(0.5, scale=2.0), CostModel(lo, dist), ((0.0, q_max),))

    @property
    def dist(self) -> ThetaDistribution:
        return self.cost_model.dist


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


# --- Nash ------------------------------------------------------------------

def check_nash(game: Game, thetas: Sequence[float], n_nodes: int, n_winners: int, mc_samples: int,
               seed: int, grid_points: int = 41, perturb: float = 1.0, tolerance: float = 1e-6,
               mode: WinProbMode = WinProbMode.ORDER_STATISTICS, table: Optional[StrategyTable] = None,
               expect: str = "pass") -> CheckReport:
    """No payment on a grid around the claimed equilibrium ask beats it.

    Rivals bid the tabulated equilibrium strategy. The claimed ask is the
    equilibrium payment times ``perturb``; ``perturb != 1`` is a negative
    control. A deviation counts when it beats the claimed profit by more
    than two combined standard errors plus ``tolerance``.
    """
    if table is None:
        table = StrategyTable.build(game.rule, game.cost_model, game.box, n_nodes, n_winners, mode)
    everyone_wins = n_winners >= n_nodes
    rows, worst_gap, worst_se = [], -math.inf, 0.0
    for j, theta in enumerate(thetas):
        eq = equilibrium_payment(game.rule, game.cost_model, float(theta), n_nodes, n_winners, game.box,
                                 mode=mode, dist=table.dist)
        claimed = eq.payment * perturb
        cap = float(game.rule.s(eq.quality))
        if everyone_wins:
            # any payment up to the score cap wins; beyond it the score turns negative
            grid = np.linspace(eq.cost, cap, grid_points)
        else:
            span = max(claimed - eq.cost, 1e-9)
            grid = eq.cost + span * np.linspace(0.0, 2.0, grid_points)
        grid = np.unique(np.append(grid, claimed))
        br = best_response_oracle(game.rule, game.cost_model, float(theta), n_nodes, n_winners, game.box,
                                  table.score_of, grid, mc_samples, seed + j)
        i0 = int(np.flatnonzero(grid == claimed)[0])
        combined = np.sqrt(br.se ** 2 + br.se[i0] ** 2)
        gaps = br.profit - br.profit[i0] - 2.0 * combined
        k = int(np.argmax(gaps))
        if gaps[k] > worst_gap:
            worst_gap, worst_se = float(gaps[k]), float(combined[k])
        rows.append({"theta": float(theta), "claimed_payment": claimed, "cost": eq.cost,
                     "claimed_profit": br.profit[i0], "claimed_se": br.se[i0],
                     "best_payment": br.best_payment, "best_profit": br.profit[br.best_index],
                     "max_excess_over_2se": float(gaps[k])})
    ok = worst_gap <= tolerance
    claim = "no profitable payment deviation against equilibrium rivals"
    details = {"n_nodes": n_nodes, "n_winners": n_winners, "mc_samples": mc_samples, "perturb": perturb,
               "mode": WinProbMode(mode).value, "per_theta": rows}
    if everyone_wins:
        details["regime"] = "K >= N: every bid wins, profit rises up to the score cap s(q_s)"
    name = f"nash_N{n_nodes}_K{n_winners}" + ("" if perturb == 1.0 else f"_perturbed_x{perturb:g}")
    return CheckReport(name, claim, worst_gap, worst_se, tolerance, _verdict(ok), seed, expect, details)


# --- profit monotonicity -------------------------------------------------------

def equilibrium_profit_mc(game: Game, theta: float, n_nodes: int, n_winners: int, mc_samples: int, seed: int,
                          mode: WinProbMode = WinProbMode.ORDER_STATISTICS) -> dict:
    """Monte Carlo expected profit of type ``theta`` when everyone bids the equilibrium."""
    table = StrategyTable.build(game.rule, game.cost_model, game.box, n_nodes, n_winners, mode)
    eq = equilibrium_payment(game.rule, game.cost_model, theta, n_nodes, n_winners, game.box,
                             mode=mode, dist=table.dist)
    br = best_response_oracle(game.rule, game.cost_model, theta, n_nodes, n_winners, game.box,
                              table.score_of, [eq.payment], mc_samples, seed)
    # closed form: markup * g(H(u)) = int_0^u g
    g_u = float(winning_probability_g(table.dist.H(eq.max_score), n_nodes, n_winners, mode))
    return {"n_nodes": n_nodes, "n_winners": n_winners, "profit": float(br.profit[0]), "se": float(br.se[0]),
            "analytic": eq.markup * g_u, "payment": eq.payment, "win_rate": float(br.win_rate[0])}


def _ordered(points: list[dict], direction: int) -> tuple[bool, float, float]:
    """Are successive profits strictly ordered beyond two combined SEs?"""
    margin, se_at = math.inf, 0.0
    for a, b in zip(points, points[1:]):
        diff = direction * (b["profit"] - a["profit"])
        comb_se = math.hypot(a["se"], b["se"])
        if diff - 2.0 * comb_se < margin:
            margin, se_at = diff - 2.0 * comb_se, comb_se
    return margin > 0, margin, se_at


def check_profit_monotonic_in_n(game: Game, ns: Sequence[int], n_winners: int, theta: float, mc_samples: int,
                                seed: int, expect_direction: int = -1, expect: str = "pass") -> CheckReport:
    """Equilibrium profit falls as the node count grows (``expect_direction=-1``)."""
    pts, degenerate = [], []
    for j, n in enumerate(ns):
        res = equilibrium_profit_mc(game, theta, int(n), n_winners, mc_samples, seed + j)
        (degenerate if n <= n_winners else pts).append(res)
    ok, margin, se = _ordered(pts, expect_direction) if len(pts) > 1 else (False, -math.inf, 0.0)
    word = "decreasing" if expect_direction < 0 else "increasing"
    return CheckReport(f"profit_{word}_in_N", f"equilibrium profit strictly {word} in N", margin, se, 0.0,
                       _verdict(ok), seed, expect,
                       {"theta": theta, "n_winners": n_winners, "points": pts, "certain_win_cases": degenerate})


def check_profit_monotonic_in_k(game: Game, ks: Sequence[int], n_nodes: int, theta: float, mc_samples: int,
                                seed: int, expect_direction: int = 1, expect: str = "pass") -> CheckReport:
    """Equilibrium profit rises with the number of winners (``expect_direction=+1``).

    For K in {1, 2} the pipeline payment is also compared with the closed
    forms (order statistics at K = 1, the verbatim sum at K = 2).
    """
    pts, degenerate = [], []
    for j, k in enumerate(ks):
        res = equilibrium_profit_mc(game, theta, n_nodes, int(k), mc_samples, seed + j)
        (degenerate if k >= n_nodes else pts).append(res)
    closed = {}
    for k, mode in ((1, WinProbMode.ORDER_STATISTICS), (2, WinProbMode.VERBATIM_SUM)):
        if k in ks and k < n_nodes:
            p = equilibrium_payment(game.rule, game.cost_model, theta, n_nodes, k, game.box, mode=mode).payment
            ref = che_payment(game.rule, game.cost_model, theta, n_nodes, game.box, n_winners=k)
            closed[f"K{k}"] = {"pipeline": p, "closed_form": ref, "rel_err": abs(p - ref) / abs(ref)}
    ok, margin, se = _ordered(pts, expect_direction) if len(pts) > 1 else (False, -math.inf, 0.0)
    ok = ok and all(v["rel_err"] < 1e-2 for v in closed.values())
    word = "increasing" if expect_direction > 0 else "decreasing"
    return CheckReport(f"profit_{word}_in_K", f"equilibrium profit strictly {word} in K", margin, se, 0.0,
                       _verdict(ok), seed, expect,
                       {"theta": theta, "n_nodes": n_nodes, "points": pts, "certain_win_cases": degenerate,
                        "closed_form_crosscheck": closed})


def check_profit_at_worst_type(game: Game, ns: Sequence[int], n_winners: int) -> CheckReport:
    """At the highest-cost type the rent vanishes for every N, so ordering is vacuous."""
    theta = game.dist.hi
    vals = []
    for n in ns:
        eq = equilibrium_payment(game.rule, game.cost_model, theta, int(n), n_winners, game.box)
        vals.append(eq.markup)
    est = max(abs(v) for v in vals)
    return CheckReport("profit_at_worst_type", "zero rent at the highest-cost type", est, 0.0, 1e-9,
                       _verdict(est <= 1e-9), None, "documented", {"ns": list(ns), "markups": vals})


# --- uniform selection ----------------------------------------------------------

def check_uniform_selection(n_nodes: int, n_winners: int, psis: Sequence[float], trials: int, seed: int,
                            heterogeneous: bool = False, expect: str = "pass") -> CheckReport:
    """With identical scores every node is picked with frequency K/N.

    Each trial runs the real selection routine with coin-flip tie breaks,
    including the top-up path when a probabilistic pass ends short. The
    heterogeneous variant gives nodes distinct scores and should deviate.
    """
    target = n_winners / n_nodes
    band = 3.0 * math.sqrt(target * (1 - target) / trials) if 0 < target < 1 else 0.0
    scores = np.arange(n_nodes, dtype=float) if heterogeneous else np.zeros(n_nodes)
    rng = np.random.default_rng(seed)
    worst, per_psi = 0.0, {}
    for psi in psis:
        counts = np.zeros(n_nodes)
        fills = 0
        for _ in range(trials):
            chosen, _, _, n_fill = select_ranked(scores, n_winners, psi, rng)
            counts[chosen] += 1
            fills += n_fill > 0
        freq = counts / trials
        dev = float(np.max(np.abs(freq - target)))
        worst = max(worst, dev)
        per_psi[f"{psi:g}"] = {"frequencies": freq, "max_abs_dev": dev, "trials_with_fill": fills}
    ok = worst <= band + 1e-15
    name = "uniform_selection" + ("_heterogeneous" if heterogeneous else "")
    return CheckReport(name, "selection frequency K/N for identical scores", worst, band / 3.0, band,
                       _verdict(ok), seed, expect,
                       {"n_nodes": n_nodes, "n_winners": n_winners, "target": target, "per_psi": per_psi})


# --- separability ---------------------------------------------------------------

def check_separability(game: Game, thetas: Sequence[float], n_random: int, seed: int,
                       quality_override: Optional[np.ndarray] = None, expect: str = "pass") -> CheckReport:
    """Moving any bid to ``(q_s, p + s(q_s) - s(q))`` keeps its score and never lowers the margin.

    ``quality_override`` replaces ``q_s`` with another quality (negative control).
    """
    rng = np.random.default_rng(seed)
    b = np.asarray(game.box, dtype=float)
    rule, cm = game.rule, game.cost_model
    worst_score_gap, worst_margin = 0.0, math.inf
    for theta in thetas:
        qs = optimal_quality(rule, cm, game.box, theta) if quality_override is None else np.asarray(quality_override)
        qs_val = float(rule.s(qs))
        q = rng.uniform(b[:, 0], b[:, 1], size=(n_random, rule.m))
        q[0] = qs
        p = rng.uniform(0.0, 2.0 * max(qs_val, 1e-9), size=n_random)
        sq = np.atleast_1d(rule.s(q))
        p_adj = p + qs_val - sq
        s_orig = sq - p
        s_adj = qs_val - p_adj
        scale = np.maximum(1.0, np.abs(s_orig))
        worst_score_gap = max(worst_score_gap, float(np.max(np.abs(s_adj - s_orig) / scale)))
        delta = (p_adj - theta * cm.unit_cost(qs)) - (p - theta * np.atleast_1d(cm.unit_cost(q)))
        worst_margin = min(worst_margin, float(np.min(delta)))
    tol = 1e-9
    ok = worst_score_gap <= 1e-12 and worst_margin >= -tol
    name = "separability" + ("" if quality_override is None else "_suboptimal_quality")
    return CheckReport(name, "optimal quality is chosen independently of the payment", worst_margin, 0.0, tol,
                       _verdict(ok), seed, expect,
                       {"max_rel_score_gap": worst_score_gap, "n_random": n_random, "thetas": list(thetas)})


# --- resource ratios ---------------------------------------------------------------

def constrained_optimum(alphas: Sequence[float], betas: Sequence[float], theta: float, budget: float) -> np.ndarray:
    """Numerically maximize ``prod q_i^a_i`` subject to ``theta * sum(b_i q_i) = budget``."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    x0 = np.full(a.size, budget / (theta * b.sum()))
    cons = {"type": "eq", "fun": lambda q: theta * (b @ q) / budget - 1.0, "jac": lambda q: theta * b / budget}
    res = optimize.minimize(lambda q: -float(a @ np.log(q)), x0, jac=lambda q: -a / q, method="SLSQP",
                            bounds=[(1e-12, None)] * a.size, constraints=[cons],
                            options={"ftol": 1e-15, "maxiter": 500})
    if not res.success:
        raise RuntimeError(f"constrained optimizer failed: {res.message}")
    return np.asarray(res.x)


def check_resource_ratio(alphas: Sequence[float], betas: Sequence[float], theta: float, budget: float,
                         ignore_costs: bool = False, expect: str = "pass") -> CheckReport:
    """Optimal resource ratios equal ``(a_i / a_j) (b_j / b_i)``.

    ``ignore_costs=True`` compares against ``a_i / a_j`` alone (negative
    control whenever the cost weights differ).
    """
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    q = constrained_optimum(a, b, theta, budget)
    closed = a * budget / (theta * b * a.sum())
    worst = 0.0
    for i, j in itertools.permutations(range(a.size), 2):
        want = a[i] / a[j] if ignore_costs else (a[i] / a[j]) * (b[j] / b[i])
        worst = max(worst, abs(q[i] / q[j] - want) / want)
    if not ignore_costs:
        worst = max(worst, float(np.max(np.abs(q - closed) / closed)))
    tol = 1e-4
    name = "resource_ratio" + ("_ignoring_costs" if ignore_costs else "")
    return CheckReport(name, "optimal resource ratios follow exponents over cost weights", worst, 0.0, tol,
                       _verdict(worst <= tol), None, expect,
                       {"alphas": a, "betas": b, "theta": theta, "budget": budget, "numerical": q,
                        "closed_form": closed})


# --- incentive compatibility ---------------------------------------------------------

def check_understatement(rule: ScoringRule, quality: Sequence[float], payment: float, factors: Sequence[float],
                         seed: int, dims: Optional[Sequence[int]] = None, n_rivals: int = 9, n_winners: int = 3,
                         mc_samples: int = 20_000, expect: str = "pass") -> CheckReport:
    """Declaring less quality than available never raises the score or the win rate.

    ``dims`` restricts the understatement to some components. Factors above
    one (overstatement) are the negative control. Rivals' scores come from
    random qualities in ``[0, 2q]`` and payments in ``[0, 2p]``.
    """
    q = np.asarray(quality, dtype=float)
    dims = list(range(q.size)) if dims is None else list(dims)
    rng = np.random.default_rng(seed)
    rq = rng.uniform(0.0, 2.0 * q, size=(mc_samples, n_rivals, q.size))
    rival = np.asarray(rule.s(rq)) - rng.uniform(0.0, 2.0 * payment, size=(mc_samples, n_rivals))
    kth = -np.partition(-rival, n_winners - 1, axis=1)[:, n_winners - 1]
    s_true = score(rule, Bid("self", QualityVector(tuple(q)), payment))
    win_true = s_true > kth
    rows, worst_score, worst_win, se_at = [], -math.inf, -math.inf, 0.0
    for f in factors:
        qh = q.copy()
        qh[dims] = f * q[dims]
        s_hat = score(rule, Bid("self", QualityVector(tuple(qh)), payment))
        win_hat = s_hat > kth
        d = win_hat.astype(float) - win_true
        se = float(d.std(ddof=1) / math.sqrt(mc_samples)) if mc_samples > 1 else 0.0
        worst_score = max(worst_score, s_hat - s_true)
        worst_win = max(worst_win, float(d.mean()) - 2 * se)
        if float(d.mean()) - 2 * se >= worst_win:
            se_at = se
        rows.append({"factor": f, "score_true": s_true, "score_declared": s_hat, "score_change": s_hat - s_true,
                     "win_rate_true": float(win_true.mean()), "win_rate_declared": float(win_hat.mean())})
    ok = worst_score <= 1e-12 and worst_win <= 0.0
    strict = all(r["score_change"] < 0 for r in rows if r["factor"] < 1)
    over = any(f > 1 for f in factors)
    name = ("overstatement" if over else "understatement") + f"_{rule.kind.value}"
    return CheckReport(name, "misreporting quality downward does not help", worst_score, se_at, 1e-12,
                       _verdict(ok), seed, expect,
                       {"quality": q, "payment": payment, "dims": dims, "rows": rows,
                        "strict_decrease": strict, "max_win_gain_minus_2se": worst_win})


def check_overstatement_settlement(rule: ScoringRule, seed: int) -> CheckReport:
    """Overstated quality wins the auction but is caught at settlement."""
    bids = [Bid("honest", QualityVector((1.0, 1.0)), 0.1), Bid("liar", QualityVector((1.5, 1.5)), 0.1),
            Bid("other", QualityVector((0.5, 0.5)), 0.1)]
    ws = determine_winners(bids, AuctionConfig(3, 2, rule, seed=seed), seed)
    delivered = {"honest": (1.0, 1.0), "liar": (1.0, 1.0), "other": (0.5, 0.5)}
    st = settle(ws, delivered)
    bl = Blacklist()
    bl.apply(st.blacklist_delta)
    ok = "liar" in ws.ids and "liar" in st.withheld and "liar" in bl and "honest" in st.paid
    return CheckReport("overstatement_settlement", "overstated winners are unpaid and blacklisted",
                       float(len(st.withheld)), 0.0, 0.0, _verdict(ok), seed, "pass",
                       {"winners": ws.ids, "paid": st.paid, "withheld": st.withheld})


# --- Pareto efficiency -------------------------------------------------------------------

def check_pareto(rule: ScoringRule, cost_model: CostModel, thetas: Sequence[float], box: Box,
                 grid_points: int = 201, perturb_index: Optional[int] = None, seed: int = 0,
                 expect: str = "pass") -> CheckReport:
    """Winners' social surplus matches the brute-force maximum over the box.

    ``perturb_index`` forces that winner onto a random quality (negative control).
    """
    b = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in b]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, rule.m)
    s_mesh = np.asarray(rule.s(mesh))
    c_mesh = np.asarray(cost_model.unit_cost(mesh))
    achieved, best, qualities = 0.0, 0.0, []
    for i, theta in enumerate(thetas):
        q = optimal_quality(rule, cost_model, box, theta)
        if i == perturb_index:
            q = rng.uniform(b[:, 0], b[:, 1])
        qualities.append(q)
        achieved += float(rule.s(q) - cost_model(q, theta))
        best += float(np.max(s_mesh - theta * c_mesh))
    # the optimizer may beat the grid slightly; it must never lose to it by more than the grid error
    step = float(np.max((b[:, 1] - b[:, 0]) / (grid_points - 1)))
    tol = 1e-6 + 1e-3 * step * max(1.0, abs(best))
    gap = best - achieved
    name = "pareto" + ("" if perturb_index is None else "_perturbed_winner")
    return CheckReport(name, "winners' qualities maximize social surplus", gap, 0.0, tol, _verdict(gap <= tol),
                       seed, expect, {"achieved": achieved, "grid_max": best, "qualities": qualities,
                                      "thetas": list(thetas)})


# --- win probability form ------------------------------------------------------------------

def check_win_probability(n_nodes: int, n_winners: int, h: float, trials: int, seed: int,
                          tolerance: float = 0.005) -> CheckReport:
    """Compare the verbatim sum and the order-statistics form with simulation.

    Each of the ``N - 1`` rivals beats us independently with probability
    ``1 - H``; we win when fewer than ``K`` do. The verdict concerns the
    order-statistics form. When the verbatim sum differs the report is
    marked documented.
    """
    rng = np.random.default_rng(seed)
    beats = rng.random((trials, n_nodes - 1)) < (1.0 - h)
    wins = beats.sum(axis=1) < n_winners
    freq = float(wins.mean())
    se = math.sqrt(max(freq * (1 - freq), 1e-300) / trials)
    g_os = float(winning_probability_g(h, n_nodes, n_winners, WinProbMode.ORDER_STATISTICS))
    g_v = float(winning_probability_g(h, n_nodes, n_winners, WinProbMode.VERBATIM_SUM))
    # never tighter than four standard errors of the simulation
    tolerance = max(tolerance, 4.0 * math.sqrt(g_os * (1 - g_os) / trials))
    os_ok = abs(freq - g_os) <= tolerance
    diverges = abs(g_v - freq) > tolerance
    # a wrong order-statistics value is a real failure; a wrong verbatim value is recorded
    expect = "documented" if os_ok and diverges else "pass"
    verdict = DOCUMENTED if expect == "documented" else _verdict(os_ok)
    return CheckReport(f"win_probability_N{n_nodes}_K{n_winners}_H{h:g}",
                       "order-statistics win probability matches simulation", freq, se, tolerance, verdict, seed,
                       expect, {"verbatim_sum": g_v, "order_statistics": g_os, "simulated": freq,
                                "order_statistics_matches": os_ok, "verbatim_diverges": diverges})


def check_fill_probability(n_nodes: int, n_winners: int, psi: float, trials: int, seed: int) -> CheckReport:
    """Probability that a single probabilistic pass fills all K slots."""
    sim, se = simulate_fill_frequency(n_nodes, n_winners, psi, trials, seed)
    verbatim = fill_probability(n_nodes, n_winners, psi)
    negbin = fill_probability_negbin(n_nodes, n_winners, psi)
    tol = 4 * se
    nb_ok = abs(sim - negbin) <= tol
    diverges = abs(sim - verbatim) > tol
    expect = "documented" if nb_ok and diverges else "pass"
    verdict = DOCUMENTED if expect == "documented" else _verdict(nb_ok)
    return CheckReport(f"fill_probability_N{n_nodes}_K{n_winners}_psi{psi:g}",
                       "negative-binomial fill probability matches simulation", sim, se, tol,
                       verdict, seed, expect,
                       {"verbatim_sum": verbatim, "negative_binomial": negbin, "simulated": sim})


# --- suite ------------------------------------------------------------------------------------

def _named(report: CheckReport, name: str) -> CheckReport:
    report.name = name
    return report


def run_suite(seed: int = 0, mc_samples: int = 100_000, selection_trials: int = 100_000,
              quick: bool = False) -> list[CheckReport]:
    """All checks with their negative controls, in a fixed order."""
    if quick:
        mc_samples, selection_trials = min(mc_samples, 20_000), min(selection_trials, 5_000)
    game = Game.sqrt_linear()
    rng = np.random.default_rng(seed)
    thetas = np.round(np.sort(game.dist.sample(rng, 5)), 6)
    out: list[CheckReport] = []

    for k in (1, 3):
        table = StrategyTable.build(game.rule, game.cost_model, game.box, 10, k)
        out.append(check_nash(game, thetas, 10, k, mc_samples, seed + 100 * k, table=table))
        out.append(check_nash(game, thetas, 10, k, mc_samples, seed + 100 * k, table=table, perturb=1.5,
                              expect="fail"))
    out.append(check_nash(game, thetas[:2], 2, 2, max(mc_samples // 10, 1000), seed + 500, expect="pass"))

    out.append(check_profit_monotonic_in_n(game, (10, 20, 40), 5, 1.2, mc_samples, seed + 1000))
    out.append(check_profit_monotonic_in_k(game, (1, 2, 5), 20, 1.2, mc_samples, seed + 2000))
    out.append(check_profit_monotonic_in_n(game, (10, 20, 40), 5, 1.2, mc_samples, seed + 1000,
                                           expect_direction=1, expect="fail"))
    out.append(check_profit_at_worst_type(game, (10, 20, 40), 5))

    out.append(check_uniform_selection(10, 3, (0.2, 0.5, 1.0), selection_trials, seed + 3000))
    out.append(_named(check_uniform_selection(10, 10, (0.5, 1.0), max(selection_trials // 100, 100), seed + 3001),
                      "uniform_selection_K_equals_N"))
    out.append(check_uniform_selection(10, 3, (1.0,), max(selection_trials // 10, 1000), seed + 3002,
                                       heterogeneous=True, expect="fail"))

    out.append(check_separability(game, thetas, 1000, seed + 4000))
    two_d = Game(ScoringRule.additive(0.6, 0.4), CostModel(1.0, game.dist, "power_separable", (0.5, 0.8), (2.0, 2.0)),
                 ((0.0, 2.0), (0.0, 2.0)))
    out.append(_named(check_separability(two_d, thetas, 1000, seed + 4001), "separability_2d"))
    out.append(check_separability(game, thetas, 1000, seed + 4002, quality_override=np.array([2.0]),
                                  expect="fail"))

    for a, b, th, c0 in (((0.5, 0.5), (0.5, 0.5), 1.0, 1.0), ((0.75, 0.25), (0.5, 0.5), 1.0, 1.0),
                         ((0.5, 0.3, 0.2), (0.2, 0.5, 0.3), 1.5, 2.0)):
        out.append(_named(check_resource_ratio(a, b, th, c0), "resource_ratio_" + "_".join(f"{v:g}" for v in a)))
    out.append(check_resource_ratio((0.75, 0.25), (0.3, 0.7), 1.0, 1.0, ignore_costs=True, expect="fail"))

    add = ScoringRule.additive(0.5, 0.5)
    out.append(check_understatement(add, (1.0, 2.0), 0.5, (1.0, 0.9, 0.5), seed + 5000))
    out.append(check_understatement(ScoringRule.min_weighted(0.5, 0.5), (1.0, 2.0), 0.5, (0.9, 0.6), seed + 5001,
                                    dims=[1], expect="documented"))
    out.append(check_understatement(add, (1.0, 2.0), 0.5, (1.2,), seed + 5002, expect="fail"))
    out.append(check_overstatement_settlement(add, seed + 5003))

    pareto_cost = CostModel(1.0, game.dist, "power_separable", (0.5, 0.8), (2.0, 2.0))
    winners = np.round(game.dist.sample(np.random.default_rng(seed + 6000), 3), 6)
    out.append(check_pareto(add, pareto_cost, winners, ((0.0, 2.0), (0.0, 2.0))))
    out.append(_named(check_pareto(add, pareto_cost, winners[:1], ((0.0, 2.0), (0.0, 2.0))), "pareto_single_winner"))
    out.append(check_pareto(add, pareto_cost, winners, ((0.0, 2.0), (0.0, 2.0)), perturb_index=1,
                            seed=seed + 6001, expect="fail"))

    out.append(check_win_probability(3, 3, 0.5, mc_samples, seed + 7000))
    out.append(check_win_probability(10, 1, 0.7, mc_samples, seed + 7001))
    out.append(check_win_probability(10, 3, 0.7, mc_samples, seed + 7002))
    out.append(check_fill_probability(5, 3, 0.5, mc_samples, seed + 7100))
    return out


def suite_ok(reports: Sequence[CheckReport]) -> bool:
    return all(r.ok for r in reports)
