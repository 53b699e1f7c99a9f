"""Univariate input measures on [-1, 1] and i.i.d. product sampling."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

INFINITE = math.inf


class MeasureKind(enum.Enum):
    DISCRETE_UNIFORM = "discrete_uniform"
    DISCRETE_WEIGHTED = "discrete_weighted"
    CONTINUOUS_UNIFORM = "continuous_uniform"


class InvalidMeasureError(ValueError):
    """Raised when a measure violates the support or weight constraints."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Distinct stream ids give statistically independent sequences, so parallel
    trials can each own a stream without coordinating.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class MeasureSpec:
    """A non-constant distribution on [-1, 1].

    Use the ``discrete_uniform``, ``discrete_weighted``, ``rademacher`` or
    ``continuous_uniform`` constructors rather than calling this directly.
    """

    kind: MeasureKind
    support: tuple = ()
    weights: tuple = ()
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind is MeasureKind.CONTINUOUS_UNIFORM:
            if not (-1.0 <= self.lo < self.hi <= 1.0):
                raise InvalidMeasureError(f"need -1 <= lo < hi <= 1, got ({self.lo}, {self.hi})")
            return
        s = self.support
        if len(s) < 2:
            raise InvalidMeasureError("a discrete measure needs at least two support points")
        if any(not (-1.0 <= v <= 1.0) for v in s):
            raise InvalidMeasureError("support points must lie in [-1, 1]")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise InvalidMeasureError("support points must be strictly increasing")
        if len(self.weights) != len(s):
            raise InvalidMeasureError("one weight per support point is required")
        if any(w <= 0 for w in self.weights):
            raise InvalidMeasureError("weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise InvalidMeasureError("weights must sum to 1")

    @classmethod
    def discrete_uniform(cls, support: Sequence[float]) -> "MeasureSpec":
        s = tuple(float(v) for v in support)
        return cls(MeasureKind.DISCRETE_UNIFORM, s, tuple(1.0 / len(s) for _ in s))

    @classmethod
    def discrete_weighted(cls, support: Sequence[float], weights: Sequence[float]) -> "MeasureSpec":
        return cls(MeasureKind.DISCRETE_WEIGHTED, tuple(float(v) for v in support),
                   tuple(float(w) for w in weights))

    @classmethod
    def rademacher(cls) -> "MeasureSpec":
        return cls.discrete_uniform((-1.0, 1.0))

    @classmethod
    def continuous_uniform(cls, lo: float = -1.0, hi: float = 1.0) -> "MeasureSpec":
        return cls(MeasureKind.CONTINUOUS_UNIFORM, lo=float(lo), hi=float(hi))

    @property
    def is_discrete(self) -> bool:
        return self.kind is not MeasureKind.CONTINUOUS_UNIFORM

    @property
    def is_symmetric(self) -> bool:
        if not self.is_discrete:
            return self.lo == -self.hi
        s, w = self.support, self.weights
        return all(a == -b for a, b in zip(s, reversed(s))) and all(
            a == b for a, b in zip(w, reversed(w)))

    @classmethod
    def from_config(cls, cfg: dict) -> "MeasureSpec":
        """Parse ``{"kind": "rademacher"|"uniform"|"discrete", ...}``."""
        kind = cfg.get("kind")
        if kind == "rademacher":
            return cls.rademacher()
        if kind == "uniform":
            return cls.continuous_uniform(cfg.get("lo", -1.0), cfg.get("hi", 1.0))
        if kind == "discrete":
            if "support" not in cfg:
                raise InvalidMeasureError("discrete measure needs a support list")
            if cfg.get("weights") is None:
                return cls.discrete_uniform(cfg["support"])
            return cls.discrete_weighted(cfg["support"], cfg["weights"])
        raise InvalidMeasureError(f"unknown measure kind {kind!r}")

    def to_config(self) -> dict:
        if not self.is_discrete:
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        out = {"kind": "discrete", "support": list(self.support)}
        if self.kind is MeasureKind.DISCRETE_WEIGHTED:
            out["weights"] = list(self.weights)
        return out


@dataclass(frozen=True)
class Moments:
    """Raw moments ``c_0..c_K`` with ``c_n = E[X^n]``."""

    values: tuple

    def __getitem__(self, n):
        return self.values[n]

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def sample_matrix(spec: MeasureSpec, n: int, d: int, seed: int, stream: int = 0) -> np.ndarray:
    """Draw an ``n x d`` matrix of i.i.d. entries from ``spec``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = make_rng(seed, stream)
    if spec.is_discrete:
        idx = rng.choice(len(spec.support), size=(n, d), p=np.array(spec.weights))
        return np.asarray(spec.support, dtype=float)[idx]
    return rng.uniform(spec.lo, spec.hi, size=(n, d))


def exact_moments(spec: MeasureSpec, K: int) -> Moments:
    if K < 0:
        raise ValueError("K must be non-negative")
    if spec.is_discrete:
        # fsum is correctly rounded, so symmetric supports give exact zeros at odd orders
        vals = tuple(math.fsum(w * x ** n for x, w in zip(spec.support, spec.weights))
                     for n in range(K + 1))
    else:
        lo, hi = spec.lo, spec.hi
        vals = tuple((hi ** (n + 1) - lo ** (n + 1)) / ((n + 1) * (hi - lo)) for n in range(K + 1))
        if spec.is_symmetric:
            vals = tuple(0.0 if n % 2 else v for n, v in enumerate(vals))
    return Moments(vals)


def support_cardinality(spec: MeasureSpec) -> float:
    """Number of support points, or ``INFINITE`` for a continuous measure."""
    return len(spec.support) if spec.is_discrete else INFINITE


def product_support(spec: MeasureSpec, d: int, budget: Optional[int] = 10 ** 6):
    """Enumerate the support of the d-fold product measure.

    Returns ``(points, probs)`` with ``points`` of shape ``(S**d, d)``.
    """
    if not spec.is_discrete:
        raise ValueError("only discrete measures can be enumerated")
    size = len(spec.support) ** d
    if budget is not None and size > budget:
        raise OverflowError(f"product support has {size} points, budget is {budget}")
    s = np.array(spec.support)
    w = np.array(spec.weights)
    combos = np.array(list(itertools.product(range(len(s)), repeat=d)), dtype=int).reshape(-1, d)
    return s[combos], np.prod(w[combos], axis=1)
