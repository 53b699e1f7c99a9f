"""Monomial index sets and the feature maps built on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

DEFAULT_FEATURE_BUDGET = 5_000_000

MultiIndex = tuple  # exponent vector, one non-negative int per coordinate


class Ordering(enum.Enum):
    GRADED_DESCENDING = "graded_descending"
    GRADED_ASCENDING = "graded_ascending"


class FeatureBudgetError(RuntimeError):
    """Raised when a feature set or design matrix would exceed its size cap."""


def omega(support_card: float, t: int) -> int:
    """Per-coordinate exponent cap ``min(|S| - 1, t)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if math.isinf(support_card):
        return int(t)
    return int(min(int(support_card) - 1, t))


def degree(alpha: MultiIndex) -> int:
    return int(sum(alpha))


def count_bounded(d: int, cap: int, t: int) -> int:
    """Number of exponent vectors of length ``d``, entries in ``[0, cap]``, summing to ``t``."""
    if t < 0:
        return 0
    if d == 0:
        return 1 if t == 0 else 0
    # inclusion-exclusion over coordinates forced above the cap
    return sum((-1) ** j * math.comb(d, j) * math.comb(t - j * (cap + 1) + d - 1, d - 1)
               for j in range(min(d, t // (cap + 1)) + 1))


def count_up_to(d: int, cap: int, top: int) -> int:
    """Number of exponent vectors with entries in ``[0, cap]`` and total degree at most ``top``."""
    if top < 0:
        return 0
    return sum((-1) ** j * math.comb(d, j) * math.comb(top - j * (cap + 1) + d, d)
               for j in range(min(d, top // (cap + 1)) + 1))


def _compositions(d: int, cap: int, t: int):
    # first coordinate largest first, so (1,0) precedes (0,1)
    if d == 1:
        if t <= cap:
            yield (t,)
        return
    for a in range(min(cap, t), max(0, t - (d - 1) * cap) - 1, -1):
        for rest in _compositions(d - 1, cap, t - a):
            yield (a,) + rest


def layer(d: int, cap: int, t: int) -> list:
    """All exponent vectors of total degree ``t`` with entries at most ``cap``."""
    if t == 0:
        return [(0,) * d]
    return list(_compositions(d, cap, t))


def full_count(d: int, M: int) -> int:
    """``sum_{i=0}^{M} C(d+i-1, i)``, the size of the uncapped set."""
    return sum(math.comb(d + i - 1, i) for i in range(M + 1))


@dataclass(frozen=True)
class MultiplicitiesSet:
    """Ordered set of exponent vectors indexing a monomial feature space.

    Attributes
    ----------
    d : int
        Input dimension.
    M : int
        Requested degree cap.
    s_cap : int
        Per-coordinate exponent cap.
    indices : tuple of tuple of int
        Exponent vectors in canonical order.
    ordering : Ordering
        Degree-graded direction of ``indices``.
    """

    d: int
    M: int
    s_cap: int
    indices: tuple
    ordering: Ordering
    _pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {a: i for i, a in enumerate(self.indices)})
        if len(self._pos) != len(self.indices):
            raise ValueError("duplicate exponent vectors")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @property
    def effective_degree(self) -> int:
        return min(self.M, self.d * self.s_cap)

    @property
    def exponents(self) -> np.ndarray:
        return np.array(self.indices, dtype=np.int64).reshape(len(self.indices), self.d)

    @property
    def zero_position(self) -> int:
        return self._pos[(0,) * self.d]

    def position(self, alpha) -> int:
        return self._pos[tuple(int(a) for a in alpha)]

    def __contains__(self, alpha) -> bool:
        return tuple(alpha) in self._pos

    def to_dict(self) -> dict:
        return {"d": self.d, "M": self.M, "s_cap": self.s_cap,
                "ordering": self.ordering.value, "indices": [list(a) for a in self.indices]}

    @classmethod
    def from_dict(cls, obj: dict) -> "MultiplicitiesSet":
        return cls(int(obj["d"]), int(obj["M"]), int(obj["s_cap"]),
                   tuple(tuple(int(v) for v in a) for a in obj["indices"]),
                   Ordering(obj["ordering"]))


def build_multiplicities(d: int, M: int, support_card: float = math.inf,
                         ordering: Ordering = Ordering.GRADED_DESCENDING,
                         budget: int = DEFAULT_FEATURE_BUDGET) -> MultiplicitiesSet:
    """Enumerate all exponent vectors with entries at most ``omega(support_card, M)``
    and total degree at most ``min(M, d * omega)``.
    """
    if d < 1 or M < 0:
        raise ValueError("need d >= 1 and M >= 0")
    cap = omega(support_card, M)
    top = min(M, d * cap)
    size = count_up_to(d, cap, top)
    if size > budget:
        raise FeatureBudgetError(f"{size} features exceed the budget of {budget}")
    degrees = range(top, -1, -1) if ordering is Ordering.GRADED_DESCENDING else range(top + 1)
    indices = tuple(a for t in degrees for a in layer(d, cap, t))
    return MultiplicitiesSet(d, M, cap, indices, ordering)


def featurize_rows(xs, mset: MultiplicitiesSet) -> np.ndarray:
    """Monomial features for every row of ``xs``; result has shape ``(N, |C|)``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != mset.d:
        raise ValueError(f"expected rows of length {mset.d}, got shape {xs.shape}")
    exps = mset.exponents
    top = int(exps.max()) if exps.size else 0
    # powers[n, i, e] = xs[n, i] ** e, with 0 ** 0 == 1
    powers = np.ones((xs.shape[0], mset.d, top + 1))
    for e in range(1, top + 1):
        powers[:, :, e] = powers[:, :, e - 1] * xs
    out = np.ones((xs.shape[0], len(mset)))
    for i in range(mset.d):
        col = exps[:, i]
        if col.any():
            out *= powers[:, i, col]
    return out


def featurize(x: Sequence[float], mset: MultiplicitiesSet) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != mset.d:
        raise ValueError(f"expected a vector of length {mset.d}, got shape {x.shape}")
    return featurize_rows(x[None, :], mset)[0]


@dataclass(frozen=True)
class ConvIndexMap:
    """Layout of the bias + linear + local-pair feature vector of an ``H x W`` image.

    ``pairs[k] = (p, q)`` are flat row-major pixel indices of the k-th product term.
    """

    H: int
    W: int
    r: int
    pairs: np.ndarray

    @property
    def n_features(self) -> int:
        return 1 + self.H * self.W + len(self.pairs)

    @property
    def n_nonbias(self) -> int:
        return self.n_features - 1


def conv_index_map(H: int, W: int, r: int) -> ConvIndexMap:
    if H < 1 or W < 1 or r < 0:
        raise ValueError("need H, W >= 1 and r >= 0")
    offsets = [(di, dj) for di in range(-r, r + 1) for dj in range(-r, r + 1)]
    pairs = []
    for i in range(H):
        for j in range(W):
            for di, dj in offsets:
                a, b = i + di, j + dj
                if 0 <= a < H and 0 <= b < W:
                    pairs.append((i * W + j, a * W + b))
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    arr.setflags(write=False)
    return ConvIndexMap(H, W, r, arr)


def conv_pair_features_batch(images, index_map: ConvIndexMap) -> np.ndarray:
    """Feature rows for a stack of images, shape ``(N, index_map.n_features)``."""
    images = np.asarray(images, dtype=float)
    if images.shape[1:] != (index_map.H, index_map.W):
        raise ValueError(f"expected images of shape {(index_map.H, index_map.W)}")
    flat = images.reshape(images.shape[0], -1)
    n = flat.shape[0]
    out = np.empty((n, index_map.n_features))
    out[:, 0] = 1.0
    out[:, 1:1 + flat.shape[1]] = flat
    p, q = index_map.pairs[:, 0], index_map.pairs[:, 1]
    np.multiply(flat[:, p], flat[:, q], out=out[:, 1 + flat.shape[1]:])
    return out


def conv_pair_features(image, r: int = 2):
    """Bias, linear and windowed pairwise-product features of one image.

    Returns ``(features, index_map)``.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be two-dimensional")
    imap = conv_index_map(image.shape[0], image.shape[1], r)
    return conv_pair_features_batch(image[None], imap)[0], imap
