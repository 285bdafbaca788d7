"""Core auction types: quality vectors, bids, scoring rules and cost models.

Everything here is immutable and pure. Scoring rules and cost models accept
either a single quality vector or a stacked array of shape ``(..., m)`` so the
equilibrium and simulation code can evaluate whole grids at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Hashable, Optional

import numpy as np
from scipy import stats


class ConfigError(ValueError):
    """Raised for inconsistent auction or model configuration."""


@dataclass(frozen=True)
class QualityVector:
    """Declared resource qualities ``(q_1, ..., q_m)``."""

    values: tuple[float, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ConfigError("quality vector must have at least one component")
        for v in vals:
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"quality components must be finite and >= 0, got {vals}")
        if self.labels and len(self.labels) != len(vals):
            raise ConfigError("labels must match quality dimension")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)


def as_quality(q) -> QualityVector:
    if isinstance(q, QualityVector):
        return q
    return QualityVector(tuple(np.ravel(np.asarray(q, dtype=float))))


@dataclass(frozen=True)
class Bid:
    """A sealed bid ``(q, p)`` from one node."""

    node_id: Hashable
    quality: QualityVector
    payment: float

    def __post_init__(self):
        object.__setattr__(self, "quality", as_quality(self.quality))
        p = float(self.payment)
        if not math.isfinite(p) or p < 0:
            raise ConfigError(f"bid payment must be finite and >= 0, got {self.payment!r}")
        object.__setattr__(self, "payment", p)


@dataclass(frozen=True)
class NormalizationSpec:
    """Min-max bounds per quality dimension.

    Components outside ``[lo, hi]`` are clamped before scaling. When
    ``normalize_payment`` is set the payment is scaled by ``payment_range``.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    normalize_payment: bool = False
    payment_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ConfigError("normalization lo/hi must have equal length")
        for a, b in zip(lo, hi):
            if not a < b:
                raise ConfigError(f"normalization requires lo < hi, got ({a}, {b})")
        plo, phi = (float(v) for v in self.payment_range)
        if self.normalize_payment and not plo < phi:
            raise ConfigError("payment_range requires lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "payment_range", (plo, phi))

    @property
    def m(self) -> int:
        return len(self.lo)

    def quality(self, q: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return (np.clip(q, lo, hi) - lo) / (hi - lo)

    def payment(self, p):
        if not self.normalize_payment:
            return p
        plo, phi = self.payment_range
        return (p - plo) / (phi - plo)


class RuleKind(str, Enum):
    ADDITIVE = "additive"
    MIN_WEIGHTED = "min_weighted"
    COBB_DOUGLAS = "cobb_douglas"
    SCALED_PRODUCT = "scaled_product"


@dataclass(frozen=True)
class ScoringRule:
    """Quasi-linear scoring rule ``S(q, p) = s(q) - p``.

    ``alphas`` are the per-dimension coefficients (exponents for Cobb-Douglas).
    ``scale`` multiplies ``s``; ``scaled_product`` is ``scale * prod(q)`` with
    ``alphas`` fixing only the dimension.
    """

    kind: RuleKind
    alphas: tuple[float, ...]
    scale: float = 1.0
    normalization: Optional[NormalizationSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise ConfigError("scoring rule needs at least one coefficient")
        if any(not a > 0 for a in alphas):
            raise ConfigError(f"scoring coefficients must be > 0, got {alphas}")
        if not self.scale > 0:
            raise ConfigError("scoring scale must be > 0")
        if self.normalization is not None and self.normalization.m != len(alphas):
            raise ConfigError("normalization dimension does not match rule dimension")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def additive(cls, *alphas, **kw) -> "ScoringRule":
        return cls(RuleKind.ADDITIVE, alphas, **kw)

    @classmethod
    def min_weighted(cls, *alphas, **kw) -> "ScoringRule":
        return cls(RuleKind.MIN_WEIGHTED, alphas, **kw)

    @classmethod
    def cobb_douglas(cls, *alphas, **kw) -> "ScoringRule":
        return cls(RuleKind.COBB_DOUGLAS, alphas, **kw)

    @classmethod
    def scaled_product(cls, alpha: float, m: int = 2, **kw) -> "ScoringRule":
        return cls(RuleKind.SCALED_PRODUCT, (1.0,) * m, scale=alpha, **kw)

    @property
    def m(self) -> int:
        return len(self.alphas)

    @property
    def separable(self) -> bool:
        return self.kind is RuleKind.ADDITIVE or self.m == 1

    def cobb_douglas_sums_to_one(self, tol: float = 1e-12) -> bool:
        return self.kind is RuleKind.COBB_DOUGLAS and abs(sum(self.alphas) - 1.0) <= tol

    def _check_dim(self, q: np.ndarray):
        if q.shape[-1] != self.m:
            raise ConfigError(f"quality dimension {q.shape[-1]} does not match rule dimension {self.m}")

    def s(self, q) -> np.ndarray | float:
        """Evaluate the quality part ``s(q)`` (after normalization, if any)."""
        q = np.asarray(q.array if isinstance(q, QualityVector) else q, dtype=float)
        self._check_dim(q)
        if self.normalization is not None:
            q = self.normalization.quality(q)
        a = np.asarray(self.alphas)
        if self.kind is RuleKind.ADDITIVE:
            out = (a * q).sum(axis=-1)
        elif self.kind is RuleKind.MIN_WEIGHTED:
            out = (a * q).min(axis=-1)
        elif self.kind is RuleKind.COBB_DOUGLAS:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.exp((a * np.log(q)).sum(axis=-1))
            # limit value at any zero component
            out = np.where((q <= 0).any(axis=-1), 0.0, out)
        else:
            out = q.prod(axis=-1)
        out = self.scale * out
        return float(out) if np.ndim(out) == 0 else out

    def score(self, bid: Bid) -> float:
        return score(self, bid)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "alphas": list(self.alphas), "scale": self.scale}
        if self.normalization is not None:
            n = self.normalization
            d["normalization"] = {
                "lo": list(n.lo),
                "hi": list(n.hi),
                "normalize_payment": n.normalize_payment,
                "payment_range": list(n.payment_range),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoringRule":
        norm = d.get("normalization")
        if norm is not None:
            norm = NormalizationSpec(
                lo=tuple(norm["lo"]),
                hi=tuple(norm["hi"]),
                normalize_payment=bool(norm.get("normalize_payment", False)),
                payment_range=tuple(norm.get("payment_range", (0.0, 1.0))),
            )
        return cls(RuleKind(d["kind"]), tuple(d["alphas"]), scale=d.get("scale", 1.0), normalization=norm)


def score(rule: ScoringRule, bid: Bid) -> float:
    """``S(q, p) = s(q) - p``, with ``p`` normalized only if the rule asks for it."""
    p = bid.payment
    if rule.normalization is not None:
        p = rule.normalization.payment(p)
    return float(rule.s(bid.quality)) - p


def utility(rule: ScoringRule, q) -> float:
    """Aggregator utility ``U(q)``; taken to be the rule's quality part."""
    return float(rule.s(as_quality(q)))


# --- private cost side -----------------------------------------------------


@dataclass(frozen=True)
class ThetaDistribution:
    """Prior of the private cost parameter on ``[lo, hi]``.

    ``kind`` is ``"uniform"`` or ``"truncnorm"`` (``mean``/``sd`` in params).
    """

    lo: float
    hi: float
    kind: str = "uniform"
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not (0 < self.lo < self.hi < math.inf):
            raise ConfigError(f"theta support must satisfy 0 < lo < hi < inf, got [{self.lo}, {self.hi}]")
        if self.kind not in ("uniform", "truncnorm"):
            raise ConfigError(f"unknown theta distribution {self.kind!r}")
        if self.kind == "truncnorm" and not self.sd > 0:
            raise ConfigError("truncnorm sd must be > 0")

    @property
    def _frozen(self):
        if self.kind == "uniform":
            return stats.uniform(loc=self.lo, scale=self.hi - self.lo)
        a = (self.lo - self.mean) / self.sd
        b = (self.hi - self.mean) / self.sd
        return stats.truncnorm(a, b, loc=self.mean, scale=self.sd)

    def cdf(self, t):
        if self.kind == "uniform":
            return np.clip((np.asarray(t, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return self._frozen.cdf(t)

    def pdf(self, t):
        return self._frozen.pdf(t)

    def ppf(self, u):
        if self.kind == "uniform":
            return self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)
        return self._frozen.ppf(u)

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        if self.kind == "truncnorm":
            d.update(mean=self.mean, sd=self.sd)
        return d


class CostKind(str, Enum):
    ADDITIVE_LINEAR = "additive_linear"
    POWER_SEPARABLE = "power_separable"


@dataclass(frozen=True)
class CostModel:
    """Private cost ``c(q, theta)``.

    ``additive_linear``: ``theta * sum(beta_i q_i)``;
    ``power_separable``: ``theta * sum(beta_i q_i ** gamma_i)`` with ``gamma_i >= 1``.
    Both are linear in theta, so ``dc/dtheta = c / theta``.
    """

    theta: float
    dist: ThetaDistribution
    kind: CostKind = CostKind.ADDITIVE_LINEAR
    betas: tuple[float, ...] = (1.0,)
    gammas: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind(self.kind))
        betas = tuple(float(b) for b in self.betas)
        if not self.theta > 0:
            raise ConfigError("theta must be positive")
        if any(not b > 0 for b in betas):
            raise ConfigError("cost coefficients must be > 0")
        gammas = tuple(float(g) for g in self.gammas)
        if self.kind is CostKind.POWER_SEPARABLE:
            if not gammas:
                gammas = (1.0,) * len(betas)
            if len(gammas) != len(betas) or any(g < 1 for g in gammas):
                raise ConfigError("power_separable needs one gamma >= 1 per beta")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def m(self) -> int:
        return len(self.betas)

    def with_theta(self, theta: float) -> "CostModel":
        return CostModel(theta, self.dist, self.kind, self.betas, self.gammas)

    def unit_cost(self, q) -> np.ndarray | float:
        """``c(q, 1)``: the theta-free part, equal to ``dc/dtheta``."""
        q = np.asarray(q.array if isinstance(q, QualityVector) else q, dtype=float)
        if q.shape[-1] != self.m:
            raise ConfigError(f"quality dimension {q.shape[-1]} does not match cost dimension {self.m}")
        b = np.asarray(self.betas)
        if self.kind is CostKind.ADDITIVE_LINEAR:
            out = (b * q).sum(axis=-1)
        else:
            out = (b * q ** np.asarray(self.gammas)).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, q, theta: Optional[float] = None):
        t = self.theta if theta is None else theta
        return t * self.unit_cost(q)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "betas": list(self.betas), "theta": self.theta,
                             "dist": self.dist.to_dict()}
        if self.kind is CostKind.POWER_SEPARABLE:
            d["gammas"] = list(self.gammas)
        return d


def cost(model: CostModel, q) -> float:
    return float(model(as_quality(q)))


class WinProbMode(str, Enum):
    VERBATIM_SUM = "verbatim_sum"
    ORDER_STATISTICS = "order_statistics"


@dataclass(frozen=True)
class AuctionConfig:
    n_nodes: int
    n_winners: int
    rule: ScoringRule
    psi: float = 1.0
    winning_prob_mode: WinProbMode = WinProbMode.ORDER_STATISTICS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "winning_prob_mode", WinProbMode(self.winning_prob_mode))
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be >= 2")
        if not 1 <= self.n_winners <= self.n_nodes:
            raise ConfigError(f"n_winners must satisfy 1 <= K <= N, got K={self.n_winners}, N={self.n_nodes}")
        if not 0 < self.psi <= 1:
            raise ConfigError(f"psi must lie in (0, 1], got {self.psi}")
