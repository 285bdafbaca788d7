"""Experiment configuration: YAML file <-> nested dataclasses.

Every field has a default, so an empty file is the default profile (100
nodes, 20 winners, score ``25 * q1 * q2`` over data size and category share).
Validation errors name the offending field and, when the value came from a
file, its line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .auction import ConfigError, CostModel, ScoringRule, ThetaDistribution, WinProbMode


class ConfigFileError(ConfigError):
    def __init__(self, path: str, message: str, line: Optional[int] = None, source: str = "<config>"):
        self.path = path
        self.line = line
        # line numbers only mean something for a real file
        where = f"{source}:{line}: " if line is not None and source != "--set" else f"{source}: "
        super().__init__(f"{where}{path}: {message}")


@dataclass
class RuleSection:
    kind: str = "scaled_product"
    alphas: list = field(default_factory=lambda: [1.0, 1.0])
    scale: float = 25.0


@dataclass
class ThetaSection:
    kind: str = "uniform"
    lo: float = 1.0
    hi: float = 2.0
    mean: float = 1.5
    sd: float = 0.5


@dataclass
class AuctionSection:
    n_nodes: int = 100
    n_winners: int = 20
    psi: float = 1.0
    winning_prob_mode: str = "order_statistics"
    rule: RuleSection = field(default_factory=RuleSection)


@dataclass
class CostSection:
    kind: str = "additive_linear"
    betas: list = field(default_factory=lambda: [1.0, 1.0])
    gammas: list = field(default_factory=list)
    theta: ThetaSection = field(default_factory=ThetaSection)


@dataclass
class FLSection:
    n_samples: int = 20000
    n_features: int = 32
    n_classes: int = 10
    separation: float = 0.5
    holdout: float = 0.2
    shards_per_node: int = 2
    shards_range: Optional[list] = field(default_factory=lambda: [1, 3])
    shard_size_range: list = field(default_factory=lambda: [1.0, 5.0])
    learner: str = "softmax"
    hidden: int = 64
    init_scale: float = 0.2
    lr: float = 0.05
    epochs: int = 1
    batch_size: Optional[int] = 32
    rounds: int = 30
    offer_fraction: list = field(default_factory=lambda: [0.5, 1.0])
    redraw_theta: bool = True
    threshold: float = 0.65
    bidding: str = "equilibrium"
    markup_mu: float = 0.1
    prior_draws: int = 16


@dataclass
class EquilibriumSection:
    """Game tabulated by the ``equilibrium`` subcommand; theta prior comes from ``cost.theta``."""

    kind: str = "cobb_douglas"
    alphas: list = field(default_factory=lambda: [0.5])
    scale: float = 2.0
    cost_kind: str = "additive_linear"
    betas: list = field(default_factory=lambda: [1.0])
    gammas: list = field(default_factory=list)
    box: list = field(default_factory=lambda: [[0.0, 4.0]])
    n_nodes: int = 10
    n_winners: int = 3
    theta_points: int = 21
    mode: str = "order_statistics"


@dataclass
class SweepSection:
    n_winners: list = field(default_factory=lambda: [5, 15, 25])
    n_nodes: list = field(default_factory=lambda: [50, 100])
    psi: list = field(default_factory=lambda: [0.2, 0.9])


@dataclass
class ExperimentConfig:
    auction: AuctionSection = field(default_factory=AuctionSection)
    cost: CostSection = field(default_factory=CostSection)
    fl: FLSection = field(default_factory=FLSection)
    policies: list = field(default_factory=lambda: ["fmore", "rand", "fixed"])
    seeds: list = field(default_factory=lambda: list(range(10)))
    output_dir: str = "out"
    sweep: SweepSection = field(default_factory=SweepSection)
    equilibrium: EquilibriumSection = field(default_factory=EquilibriumSection)

    # --- derived objects ---------------------------------------------------

    def theta_dist(self) -> ThetaDistribution:
        t = self.cost.theta
        return ThetaDistribution(t.lo, t.hi, t.kind, t.mean, t.sd)

    def cost_model(self, theta: float) -> CostModel:
        return CostModel(theta, self.theta_dist(), self.cost.kind, tuple(self.cost.betas), tuple(self.cost.gammas))

    def scoring_rule(self, normalization=None) -> ScoringRule:
        r = self.auction.rule
        return ScoringRule(r.kind, tuple(r.alphas), scale=r.scale, normalization=normalization)

    def equilibrium_game(self):
        """(rule, cost model, box) of the equilibrium section."""
        e = self.equilibrium
        rule = ScoringRule(e.kind, tuple(e.alphas), scale=e.scale)
        cm = CostModel(self.cost.theta.lo, self.theta_dist(), e.cost_kind, tuple(e.betas), tuple(e.gammas))
        return rule, cm, [tuple(b) for b in e.box]

    def validate(self, lines: Optional[dict] = None, source: str = "<config>") -> "ExperimentConfig":
        lines = lines or {}

        def fail(path, msg):
            raise ConfigFileError(path, msg, lines.get(path), source)

        a, fl = self.auction, self.fl
        if a.n_nodes < 2:
            fail("auction.n_nodes", "must be >= 2")
        if not 1 <= a.n_winners <= a.n_nodes:
            fail("auction.n_winners", f"K={a.n_winners} must satisfy 1 <= K <= N={a.n_nodes}")
        if not 0 < a.psi <= 1:
            fail("auction.psi", "must lie in (0, 1]")
        try:
            WinProbMode(a.winning_prob_mode)
        except ValueError:
            fail("auction.winning_prob_mode", f"unknown mode {a.winning_prob_mode!r}")
        if len(a.rule.alphas) != len(self.cost.betas):
            fail("cost.betas", "must have one coefficient per rule dimension")
        try:
            self.scoring_rule()
        except (ConfigError, ValueError) as e:
            fail("auction.rule", str(e))
        try:
            self.cost_model(self.cost.theta.lo)
        except (ConfigError, ValueError) as e:
            fail("cost", str(e))
        for name in ("n_samples", "n_features", "n_classes", "shards_per_node", "epochs", "prior_draws"):
            if getattr(fl, name) < 1:
                fail(f"fl.{name}", "must be >= 1")
        if fl.rounds < 0:
            fail("fl.rounds", "must be >= 0")
        if not 0 < fl.holdout < 1:
            fail("fl.holdout", "must lie in (0, 1)")
        if fl.init_scale < 0:
            fail("fl.init_scale", "must be >= 0")
        if fl.lr < 0:
            fail("fl.lr", "must be >= 0")
        lo, hi = fl.offer_fraction
        if not 0 < lo <= hi <= 1:
            fail("fl.offer_fraction", "needs 0 < lo <= hi <= 1")
        slo, shi = fl.shard_size_range
        if not 0 < slo <= shi:
            fail("fl.shard_size_range", "needs 0 < lo <= hi")
        if fl.learner not in ("softmax", "mlp"):
            fail("fl.learner", f"unknown learner {fl.learner!r}")
        if fl.bidding not in ("equilibrium", "markup"):
            fail("fl.bidding", f"unknown bidding mode {fl.bidding!r}")
        if fl.shards_range is not None:
            r = fl.shards_range
            if len(r) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in r) or not 1 <= r[0] <= r[1]:
                fail("fl.shards_range", "needs [lo, hi] integers with 1 <= lo <= hi")
        if fl.batch_size is not None and (isinstance(fl.batch_size, list) or fl.batch_size < 1):
            fail("fl.batch_size", "must be >= 1 or null")
        e = self.equilibrium
        try:
            rule, cm, box = self.equilibrium_game()
            if rule.m != cm.m or len(box) != rule.m:
                raise ConfigError("rule, betas and box must share one dimension")
            if any(len(b) != 2 or not 0 <= b[0] <= b[1] < float("inf") for b in box):
                raise ConfigError("box entries must be finite [lo, hi] pairs with 0 <= lo <= hi")
        except (ConfigError, ValueError, TypeError) as err:
            fail("equilibrium", str(err))
        if not 1 <= e.n_winners <= e.n_nodes or e.n_nodes < 2:
            fail("equilibrium.n_winners", "need 1 <= K <= N and N >= 2")
        if e.theta_points < 2:
            fail("equilibrium.theta_points", "must be >= 2")
        try:
            WinProbMode(e.mode)
        except ValueError:
            fail("equilibrium.mode", f"unknown mode {e.mode!r}")
        sw = self.sweep
        for name in ("n_winners", "n_nodes"):
            vals = getattr(sw, name)
            if not vals or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in vals):
                fail(f"sweep.{name}", "needs a non-empty list of positive integers")
        if not sw.psi or any(not 0 < float(v) <= 1 for v in sw.psi):
            fail("sweep.psi", "values must lie in (0, 1]")
        for i, p in enumerate(self.policies):
            try:
                parse_policy(p)
            except ValueError as e:
                fail(f"policies[{i}]", str(e))
        if not self.seeds:
            fail("seeds", "need at least one seed")
        max_shards = fl.shards_per_node if fl.shards_range is None else fl.shards_range[1]
        if a.n_nodes * max_shards > fl.n_samples * (1 - fl.holdout):
            fail("fl.n_samples", "too few training samples for the requested shards")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def parse_policy(spec: str) -> tuple[str, float]:
    """``fmore`` | ``psi_fmore:<psi>`` | ``rand`` | ``fixed`` -> (name, psi)."""
    name, _, arg = str(spec).partition(":")
    if name in ("fmore", "rand", "fixed"):
        if arg:
            raise ValueError(f"policy {name!r} takes no argument")
        return name, 1.0
    if name == "psi_fmore":
        try:
            psi = float(arg)
        except ValueError:
            raise ValueError("psi_fmore needs a numeric psi, e.g. psi_fmore:0.5") from None
        if not 0 < psi <= 1:
            raise ValueError("psi must lie in (0, 1]")
        return name, psi
    raise ValueError(f"unknown policy {spec!r}")


def _line_map(node, prefix="", out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            _line_map(v, path, out)
    return out


def _build(cls, data: Any, path: str, lines: dict, source: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigFileError(path or "<root>", "expected a mapping", lines.get(path), source)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in fields:
            raise ConfigFileError(sub, "unknown field", lines.get(sub), source)
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, sub, lines, source)
            continue
        kwargs[key] = _coerce(value, default, sub, lines, source)
    return cls(**kwargs)


def _coerce(value, default, path, lines, source):
    def bad(expected):
        raise ConfigFileError(path, f"expected {expected}, got {value!r}", lines.get(path), source)

    if isinstance(default, bool):
        if not isinstance(value, bool):
            bad("a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            bad("a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            bad("a list")
        return list(value)
    if default is None:
        if value is None or isinstance(value, list):
            return value
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer, a list or null")
        return value
    return value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigFileError("<syntax>", str(getattr(e, "problem", e)),
                              None if mark is None else mark.line + 1, source) from None
    lines = _line_map(node) if node is not None else {}
    cfg = _build(ExperimentConfig, data, "", lines, source)
    return cfg.validate(lines, source)


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    p = Path(path)
    if not p.exists():
        raise ConfigFileError("<file>", f"config file {path} not found")
    return parse_config(p.read_text(), str(p))


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``key.path=value`` overrides (values parsed as YAML scalars)."""
    data = cfg.to_dict()
    for item in overrides:
        key, eq, raw = item.partition("=")
        if not eq:
            raise ConfigFileError(item, "override must look like key=value", source="--set")
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigFileError(key, "unknown field", source="--set")
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigFileError(key, "unknown field", source="--set")
        node[parts[-1]] = yaml.safe_load(raw)
    return parse_config(yaml.safe_dump(data, sort_keys=False), "--set")
