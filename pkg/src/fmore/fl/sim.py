"""Federated-learning round loop with auction-based or baseline node selection.

Per round every node redraws how much of its local data it is willing to
offer. Under ``fmore``/``psi_fmore`` nodes bid ``(q1, q2, p)`` with
``q1`` = offered samples and ``q2`` = share of classes covered; the winners
train on exactly what they offered. ``rand`` draws K nodes uniformly each
round and ``fixed`` keeps one random K-set for the whole run.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..auction import AuctionConfig, Bid, CostModel, QualityVector, WinProbMode
from ..config import ExperimentConfig, parse_policy
from ..equilibrium import ScoreDistribution, markup_curve, optimal_quality
from ..mechanism import determine_winners, settle
from .data import Dataset, gaussian_mixture, make_non_iid_partition, train_test_split
from .learner import aggregate, evaluate, local_train, make_learner

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["round", "policy", "accuracy", "loss", "cum_payment", "winners"]

# stream tags for derived seeds
_DATA, _SPLIT, _PART, _THETA, _OFFER, _PRIOR, _AUCTION, _RAND, _TRAIN, _INIT = range(10)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass
class NodeState:
    node_id: int
    indices: np.ndarray
    category_mix: np.ndarray
    cost_model: CostModel

    @property
    def data_size(self) -> int:
        return len(self.indices)


@dataclass
class Offer:
    indices: np.ndarray
    q1: float
    q2: float


@dataclass
class RoundResult:
    round: int
    policy: str
    winners: list
    payments: list
    scores: list
    accuracy: float
    loss: float
    cum_payment: float
    equilibrium_bids: bool = True

    def csv_row(self) -> list[str]:
        return [str(self.round), self.policy, f"{self.accuracy:.6f}", f"{self.loss:.6f}",
                f"{self.cum_payment:.6f}", ";".join(str(w) for w in self.winners)]


@dataclass
class Population:
    train: Dataset
    test: Dataset
    nodes: list[NodeState]
    d_max: int


def build_population(cfg: ExperimentConfig, seed: int, n_nodes: Optional[int] = None) -> Population:
    fl = cfg.fl
    n_nodes = cfg.auction.n_nodes if n_nodes is None else n_nodes
    data = gaussian_mixture(fl.n_samples, fl.n_features, fl.n_classes, fl.separation, seed)
    train, test = train_test_split(data, fl.holdout, seed + 1)
    shards = fl.shards_per_node if fl.shards_range is None else tuple(fl.shards_range)
    parts = make_non_iid_partition(train.y, n_nodes, fl.n_classes, shards,
                                   int(_rng(seed, _PART).integers(2**31)), tuple(fl.shard_size_range))
    thetas = cfg.theta_dist().sample(_rng(seed, _THETA), n_nodes)
    nodes = [NodeState(i, idx, np.bincount(train.y[idx], minlength=fl.n_classes), cfg.cost_model(float(t)))
             for i, (idx, t) in enumerate(zip(parts, thetas))]
    return Population(train, test, nodes, max(n.data_size for n in nodes))


def draw_offer(node: NodeState, train: Dataset, fraction: tuple[float, float], n_classes: int,
               rng: np.random.Generator) -> Offer:
    frac = rng.uniform(*fraction)
    k = max(1, int(round(frac * node.data_size)))
    idx = np.sort(rng.choice(node.indices, size=k, replace=False))
    q2 = len(np.unique(train.y[idx])) / n_classes
    return Offer(idx, float(k), q2)


def _surplus(rule, cost_model: CostModel, q1: float, q2: float, theta: float) -> tuple[np.ndarray, float]:
    q = optimal_quality(rule, cost_model, [(0.0, q1), (0.0, q2)], theta)
    return q, float(rule.s(q) - cost_model(q, theta))


def prior_score_distribution(cfg: ExperimentConfig, pop: Population, rule, seed: int) -> ScoreDistribution:
    """Distribution of rivals' maximum surplus, as a node would estimate it
    from history: every node's resources with fresh offers and fresh types."""
    rng = _rng(seed, _PRIOR)
    fl = cfg.fl
    dist = cfg.theta_dist()
    samples = []
    for node in pop.nodes:
        for _ in range(fl.prior_draws):
            frac = rng.uniform(*fl.offer_fraction)
            q1 = max(1.0, round(frac * node.data_size))
            q2 = np.count_nonzero(node.category_mix) / fl.n_classes
            _, u = _surplus(rule, node.cost_model, q1, q2, float(dist.sample(rng)))
            samples.append(max(u, 0.0))
    return ScoreDistribution.from_samples(samples)


def run_experiment(policy: str, cfg: ExperimentConfig, seed: int,
                   population: Optional[Population] = None) -> list[RoundResult]:
    """Run ``cfg.fl.rounds`` rounds of federated training under one policy."""
    name, psi = parse_policy(policy)
    fl, ac = cfg.fl, cfg.auction
    pop = population if population is not None else build_population(cfg, seed)
    n_nodes = len(pop.nodes)
    k = ac.n_winners
    if name in ("rand", "fixed") and n_nodes < k:
        raise ValueError(f"{name}: fewer than K={k} eligible nodes")
    learner = make_learner(fl.learner, fl.n_features, fl.n_classes, fl.hidden, fl.init_scale)
    w = learner.init(_rng(seed, _INIT))
    rule = cfg.scoring_rule()
    auction_cfg = AuctionConfig(n_nodes, k, rule, psi, WinProbMode(ac.winning_prob_mode), seed)
    fixed_set = np.sort(_rng(seed, _RAND).choice(n_nodes, size=k, replace=False))
    dist = None
    if name in ("fmore", "psi_fmore") and fl.bidding == "equilibrium":
        dist = prior_score_distribution(cfg, pop, rule, seed)

    results: list[RoundResult] = []
    cum = 0.0
    theta_now = np.array([n.cost_model.theta for n in pop.nodes])
    for t in range(fl.rounds):
        if fl.redraw_theta:
            theta_now = cfg.theta_dist().sample(_rng(seed, _THETA, t + 1), n_nodes)
        offers = [draw_offer(n, pop.train, tuple(fl.offer_fraction), fl.n_classes, _rng(seed, _OFFER, t, n.node_id))
                  for n in pop.nodes]
        payments: dict[int, float] = {}
        scores: list[float] = []
        if name in ("fmore", "psi_fmore"):
            winners, payments, scores = _auction_round(pop, offers, rule, auction_cfg, dist, theta_now, fl,
                                                       int(_rng(seed, _AUCTION, t).integers(2**31)))
        elif name == "rand":
            winners = sorted(int(i) for i in _rng(seed, _RAND, t + 1).choice(n_nodes, size=k, replace=False))
        else:
            winners = [int(i) for i in fixed_set]

        updates = []
        for nid in winners:
            sub = pop.train.subset(offers[nid].indices)
            res = local_train(learner, w, sub, fl.lr, fl.epochs, fl.batch_size, _rng(seed, _TRAIN, t, nid))
            if not res.empty:
                updates.append((nid, res.params, len(sub)))
        if updates:
            w = aggregate(updates)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"global parameters diverged at round {t}")
        acc, loss = evaluate(learner, w, pop.test)
        cum += sum(payments.values())
        results.append(RoundResult(t + 1, policy, winners, [payments.get(i, 0.0) for i in winners],
                                   scores, acc, loss, cum, fl.bidding == "equilibrium"))
    return results


def _auction_round(pop: Population, offers: Sequence[Offer], rule, auction_cfg: AuctionConfig,
                   dist: Optional[ScoreDistribution], thetas: np.ndarray, fl, seed: int):
    quals, costs, surplus = [], [], []
    for node, off, th in zip(pop.nodes, offers, thetas):
        q, u = _surplus(rule, node.cost_model, off.q1, off.q2, float(th))
        quals.append(q)
        costs.append(float(node.cost_model(q, float(th))))
        surplus.append(u)
    surplus = np.array(surplus)
    costs = np.array(costs)
    if dist is not None:
        asks = costs + markup_curve(surplus, dist, auction_cfg.n_nodes, auction_cfg.n_winners,
                                    auction_cfg.winning_prob_mode)
    else:
        asks = (1.0 + fl.markup_mu) * costs
    # individual rationality: nobody bids with a negative surplus or an empty offer
    bids = [Bid(node.node_id, QualityVector(tuple(q)), float(p))
            for node, q, u, p in zip(pop.nodes, quals, surplus, asks) if u > 0 and q[0] > 0]
    if not bids:
        logger.warning("auction round aborted: no bids")
        return [], {}, []
    ws = determine_winners(bids, auction_cfg, seed)
    # honest nodes deliver what they declared
    st = settle(ws, {w.node_id: w.quality.values for w in ws.winners})
    winners = sorted(ws.ids)
    return winners, dict(st.paid), ws.scores


def rounds_to_threshold(results: Sequence[RoundResult], threshold: float) -> Optional[int]:
    for r in results:
        if r.accuracy >= threshold:
            return r.round
    return None


def results_csv(results: Sequence[RoundResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow(r.csv_row())
    return buf.getvalue()


def restrict_population(pop: Population, n_nodes: int) -> Population:
    """Keep the first ``n_nodes`` nodes, so per-node data is unchanged and only the pool shrinks."""
    if not 1 <= n_nodes <= len(pop.nodes):
        raise ValueError(f"cannot keep {n_nodes} of {len(pop.nodes)} nodes")
    nodes = pop.nodes[:n_nodes]
    return Population(pop.train, pop.test, nodes, max(n.data_size for n in nodes))


def winner_score_dispersion(results: Sequence[RoundResult]) -> float:
    """Mean over rounds of the variance of winners' scores."""
    v = [float(np.var(r.scores)) for r in results if len(r.scores) > 1]
    return float(np.mean(v)) if v else 0.0
