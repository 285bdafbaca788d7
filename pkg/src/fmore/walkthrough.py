"""Five-node, two-round worked example with a min-weighted, min-max normalized rule."""

from __future__ import annotations

from .auction import AuctionConfig, NormalizationSpec, ScoringRule
from .mechanism import RoundRecord, StaticNode, run_round

NODE_IDS = ("A", "B", "C", "D", "E")

# (data size, bandwidth in Mb, payment) per node and round
ROUND_BIDS = (
    ((4000, 85, 0.20), (3000, 35, 0.10), (3500, 75, 0.18), (5000, 85, 0.20), (5000, 100, 0.20)),
    ((4000, 85, 0.16), (3500, 45, 0.10), (4000, 80, 0.15), (4000, 80, 0.20), (5000, 100, 0.30)),
)


def rule() -> ScoringRule:
    norm = NormalizationSpec(lo=(1000.0, 5.0), hi=(5000.0, 100.0), normalize_payment=False)
    return ScoringRule.min_weighted(0.5, 0.5, normalization=norm)


def run(seed: int = 0) -> list[RoundRecord]:
    cfg = AuctionConfig(n_nodes=len(NODE_IDS), n_winners=3, rule=rule(), seed=seed)
    records = []
    for r, bids in enumerate(ROUND_BIDS, start=1):
        nodes = [StaticNode(nid, (q1, q2), p) for nid, (q1, q2, p) in zip(NODE_IDS, bids)]
        records.append(run_round(r, nodes, cfg, seed=seed + r))
    return records


def table(records: list[RoundRecord]) -> str:
    """Plain-text score table, one line per node and round."""
    lines = [f"{'round':>5}  {'node':<4} {'q1':>6} {'q2':>5} {'p':>6} {'score':>9}  winner"]
    for rec in records:
        d = rec.to_dict()
        won = set(d["winners"])
        for b in d["bids"]:
            nid = b["node_id"]
            q1, q2 = b["quality"]
            lines.append(f"{rec.round_index:>5}  {nid:<4} {q1:>6g} {q2:>5g} {b['payment']:>6.2f} "
                         f"{d['scores'][nid]:>9.6f}  {'*' if nid in won else ''}")
    return "\n".join(lines)
