"""Auction round engine: bid ask, sealed bid collection, winner selection,
first-price payment and contract settlement with a blacklist."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np
from scipy.special import comb

from .auction import AuctionConfig, Bid, CostModel, QualityVector, ScoringRule, WinProbMode, as_quality, score
from .equilibrium import Box, ScoreDistribution, equilibrium_markup, optimal_quality

logger = logging.getLogger(__name__)

COMPLIANCE_TOLERANCE = 0.01


@dataclass(frozen=True)
class BidAsk:
    """What the aggregator broadcasts at the start of a round."""

    round_index: int
    rule: ScoringRule
    requirements: Mapping[str, Any] = field(default_factory=dict)


class NodeAgent(Protocol):
    node_id: Hashable

    def bid(self, ask: BidAsk) -> Optional[Bid]:
        """Return a bid, or None to abstain."""


@dataclass
class StaticNode:
    """Submits a fixed bid every round (scripted scenarios)."""

    node_id: Hashable
    quality: Sequence[float]
    payment: float

    def bid(self, ask: BidAsk) -> Optional[Bid]:
        return Bid(self.node_id, as_quality(self.quality), self.payment)


@dataclass
class EquilibriumNode:
    """Rational node: optimal quality inside its box plus the equilibrium rent.

    Abstains (individual rationality) when even its best quality yields a
    negative surplus.
    """

    node_id: Hashable
    cost_model: CostModel
    box: Box
    dist: ScoreDistribution
    n_nodes: int
    n_winners: int
    mode: WinProbMode = WinProbMode.ORDER_STATISTICS

    def bid(self, ask: BidAsk) -> Optional[Bid]:
        q = optimal_quality(ask.rule, self.cost_model, self.box)
        c = float(self.cost_model(q))
        u = float(ask.rule.s(q)) - c
        if u < 0:
            return None
        mk = equilibrium_markup(u, self.dist, self.n_nodes, self.n_winners, self.mode)
        return Bid(self.node_id, as_quality(q), c + mk.value)


@dataclass
class MarkupNode:
    """Heuristic bidder asking ``(1 + mu)`` times its cost."""

    node_id: Hashable
    cost_model: CostModel
    box: Box
    mu: float = 0.1

    def bid(self, ask: BidAsk) -> Optional[Bid]:
        q = optimal_quality(ask.rule, self.cost_model, self.box)
        c = float(self.cost_model(q))
        if float(ask.rule.s(q)) - c < 0:
            return None
        return Bid(self.node_id, as_quality(q), (1.0 + self.mu) * c)


@dataclass
class Blacklist:
    offenses: dict[Hashable, int] = field(default_factory=dict)

    def __contains__(self, node_id) -> bool:
        return node_id in self.offenses

    def __len__(self):
        return len(self.offenses)

    def add(self, node_id, count: int = 1):
        self.offenses[node_id] = self.offenses.get(node_id, 0) + count

    def apply(self, delta: Mapping[Hashable, int]):
        for nid, n in delta.items():
            self.add(nid, n)


def collect_bids(ask: BidAsk, nodes: Iterable[NodeAgent], blacklist: Optional[Blacklist] = None) -> list[Bid]:
    """Sealed-bid collection.

    Each node sees only the ask, never another node's bid. Blacklisted nodes
    are not asked; abstaining nodes contribute nothing.
    """
    blacklist = blacklist if blacklist is not None else Blacklist()
    bids = []
    for node in nodes:
        if node.node_id in blacklist:
            continue
        b = node.bid(ask)
        if b is not None:
            bids.append(b)
    return bids


@dataclass(frozen=True)
class Winner:
    node_id: Hashable
    score: float
    payment: float
    quality: QualityVector


@dataclass(frozen=True)
class WinnerSet:
    winners: tuple[Winner, ...]
    trace: tuple[tuple[Hashable, float, str], ...]
    filled: int = 0
    shortfall: int = 0
    seed: Optional[int] = None

    @property
    def ids(self) -> list:
        return [w.node_id for w in self.winners]

    @property
    def payments(self) -> list[float]:
        return [w.payment for w in self.winners]

    @property
    def scores(self) -> list[float]:
        return [w.score for w in self.winners]

    def __len__(self):
        return len(self.winners)


def rank_order(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices by descending score; ties broken by a coin flip from ``rng``."""
    coins = rng.random(len(scores))
    return np.lexsort((coins, -np.asarray(scores, dtype=float)))


def select_ranked(scores, k: int, psi: float, rng: np.random.Generator):
    """Pick ``k`` indices: top-k for ``psi = 1``, else one descending pass that
    accepts each node with probability ``psi``, topped up with the best
    unaccepted nodes if the pass ends short.

    Returns ``(chosen, order, decisions, n_filled)``. ``order`` is the scan
    order and ``decisions[j]`` (``accept``/``skip``/``fill``/``unscanned``)
    belongs to ``order[j]``.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.size
    k = min(k, n)
    order = rank_order(scores, rng)
    decisions = np.full(n, "unscanned", dtype=object)
    if psi >= 1.0:
        decisions[:k] = "accept"
        return order[:k], order, decisions, 0
    accept = rng.random(n) < psi
    taken = np.cumsum(accept)
    if taken[-1] >= k:
        stop = int(np.searchsorted(taken, k)) + 1
        decisions[:stop] = np.where(accept[:stop], "accept", "skip")
        return order[:stop][accept[:stop]], order, decisions, 0
    decisions[:] = np.where(accept, "accept", "skip")
    n_fill = k - int(taken[-1])
    fill_pos = np.flatnonzero(~accept)[:n_fill]
    decisions[fill_pos] = "fill"
    pos = np.sort(np.concatenate([np.flatnonzero(accept), fill_pos]))
    return order[pos], order, decisions, n_fill


def determine_winners(bids: Sequence[Bid], config: AuctionConfig, rng_seed: Optional[int] = None) -> WinnerSet:
    """Rank bids by score and choose ``K`` winners, paying each its own ask.

    With fewer bids than slots every bidder wins and ``shortfall`` records the
    gap.
    """
    if not bids:
        raise ValueError("no bids to select from")
    seed = config.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    scores = np.array([score(config.rule, b) for b in bids])
    k = config.n_winners
    shortfall = max(0, k - len(bids))
    if shortfall:
        logger.warning("only %d bids for %d winner slots", len(bids), k)
    chosen, order, decisions, n_fill = select_ranked(scores, k, config.psi, rng)
    winners = tuple(Winner(bids[i].node_id, float(scores[i]), bids[i].payment, bids[i].quality) for i in chosen)
    trace = tuple((bids[i].node_id, float(scores[i]), str(d)) for i, d in zip(order, decisions))
    return WinnerSet(winners, trace, n_fill, shortfall, seed)


def fill_probability(n_nodes: int, n_winners: int, psi: float) -> float:
    """Probability that one pass fills all slots, summed verbatim as
    ``sum_{i=0}^{N-K} C(i+K, i) (1-psi)^i psi^K``."""
    return float(sum(comb(i + n_winners, i) * (1 - psi) ** i * psi ** n_winners
                     for i in range(n_nodes - n_winners + 1)))


def fill_probability_negbin(n_nodes: int, n_winners: int, psi: float) -> float:
    """Same event via the negative binomial: the K-th acceptance happens
    within the first N scans, ``sum C(K+i-1, i) (1-psi)^i psi^K``."""
    return float(sum(comb(n_winners + i - 1, i) * (1 - psi) ** i * psi ** n_winners
                     for i in range(n_nodes - n_winners + 1)))


def simulate_fill_frequency(n_nodes: int, n_winners: int, psi: float, trials: int, seed: int) -> tuple[float, float]:
    """Monte Carlo frequency (and SE) of a single pass reaching K acceptances."""
    rng = np.random.default_rng(seed)
    hits = (rng.random((trials, n_nodes)) < psi).sum(axis=1) >= n_winners
    p = float(hits.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / trials)


@dataclass(frozen=True)
class Settlement:
    paid: dict
    withheld: dict
    blacklist_delta: dict


def settle(winners: WinnerSet, delivered: Mapping[Hashable, Sequence[float]],
           tolerance: float = COMPLIANCE_TOLERANCE) -> Settlement:
    """Pay compliant winners; blacklist and withhold payment from defaulters.

    A winner defaults when any delivered component falls short of the
    declared one by more than ``tolerance`` (relative), or when it delivers
    nothing at all.
    """
    paid, withheld, delta = {}, {}, {}
    for w in winners.winners:
        got = delivered.get(w.node_id)
        ok = got is not None
        if ok:
            got = np.asarray(got, dtype=float)
            ok = bool(np.all(got >= w.quality.array * (1.0 - tolerance)))
        if ok:
            paid[w.node_id] = w.payment
        else:
            withheld[w.node_id] = w.payment
            delta[w.node_id] = 1
    return Settlement(paid, withheld, delta)


@dataclass
class RoundRecord:
    round_index: int
    status: str
    bids: list[Bid]
    winner_set: Optional[WinnerSet]
    seed: int
    rule: ScoringRule

    def to_dict(self) -> dict[str, Any]:
        ws = self.winner_set
        return {
            "round": self.round_index,
            "status": self.status,
            "seed": self.seed,
            "bids": [{"node_id": _jsonable(b.node_id), "quality": list(b.quality.values),
                      "payment": b.payment, "sealed": True} for b in self.bids],
            "scores": {str(_jsonable(b.node_id)): score(self.rule, b) for b in self.bids},
            "winners": [] if ws is None else [_jsonable(i) for i in ws.ids],
            "payments": [] if ws is None else ws.payments,
            "trace": [] if ws is None else [{"node_id": _jsonable(n), "score": s, "decision": d}
                                            for n, s, d in ws.trace],
            "filled": 0 if ws is None else ws.filled,
            "shortfall": 0 if ws is None else ws.shortfall,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def run_round(round_index: int, nodes: Sequence[NodeAgent], config: AuctionConfig,
              blacklist: Optional[Blacklist] = None, seed: Optional[int] = None,
              requirements: Optional[Mapping[str, Any]] = None) -> RoundRecord:
    """Bid ask, sealed collection and winner determination for one round."""
    seed = config.seed + round_index if seed is None else seed
    ask = BidAsk(round_index, config.rule, dict(requirements or {}))
    bids = collect_bids(ask, nodes, blacklist)
    if not bids:
        return RoundRecord(round_index, "aborted: no bids", [], None, seed, config.rule)
    ws = determine_winners(bids, config, seed)
    return RoundRecord(round_index, "ok", bids, ws, seed, config.rule)
