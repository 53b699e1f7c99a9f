"""Least squares on tensorized monomial features."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .distributions import MeasureSpec, sample_matrix
from .tensorize import FeatureBudgetError, MultiplicitiesSet, featurize, featurize_rows

RCOND = 1e-10
DEFAULT_ENTRY_BUDGET = 100_000_000
MATRIX_MAGIC = b"TOLSMAT1"


@dataclass(frozen=True)
class DesignMatrix:
    """Row ``i`` holds the monomial features of sample ``i``."""

    data: np.ndarray
    mset: MultiplicitiesSet

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @cached_property
    def column_means(self) -> np.ndarray:
        return self.data.mean(axis=0)


def assemble(xs, mset: MultiplicitiesSet, budget: int = DEFAULT_ENTRY_BUDGET) -> DesignMatrix:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] < 1:
        raise ValueError("need at least one sample")
    if xs.shape[0] * len(mset) > budget:
        raise FeatureBudgetError(
            f"{xs.shape[0]} x {len(mset)} design exceeds the budget of {budget} entries")
    data = featurize_rows(xs, mset)
    data.setflags(write=False)
    return DesignMatrix(data, mset)


def lstsq_min_norm(A, y, rcond: float = RCOND):
    """Minimum-norm least-squares solution through a truncated SVD.

    Singular values below ``rcond * sigma_max`` are discarded. ``y`` may be a
    vector or a matrix of right-hand sides. Returns ``(coeffs, diagnostics)``.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != A.shape[0]:
        raise ValueError(f"{A.shape[0]} rows but {y.shape[0]} targets")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = float(s[0]) if s.size else 0.0
    keep = s > rcond * smax
    rank = int(keep.sum())
    proj = U[:, :rank].T @ y
    inv = 1.0 / s[:rank]
    coeffs = Vt[:rank].T @ (proj * inv[:, None] if y.ndim == 2 else proj * inv)
    resid = y - A @ coeffs
    diag = {
        "rank": rank,
        "columns": int(A.shape[1]),
        "sigma_max": smax,
        "sigma_min_retained": float(s[rank - 1]) if rank else 0.0,
        "condition_retained": smax / float(s[rank - 1]) if rank else math.inf,
        "residual_norm": float(np.linalg.norm(resid)),
        "rcond": rcond,
        "tie_break": "minimum-norm",
    }
    return coeffs, diag


@dataclass(frozen=True)
class Predictor:
    mset: MultiplicitiesSet
    coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (len(self.mset),):
            raise ValueError(f"need {len(self.mset)} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        return predict(self, x)

    def to_dict(self) -> dict:
        return {"multiplicities": self.mset.to_dict(), "coeffs": self.coeffs.tolist(),
                "diagnostics": self.diagnostics}

    @classmethod
    def from_dict(cls, obj: dict) -> "Predictor":
        return cls(MultiplicitiesSet.from_dict(obj["multiplicities"]),
                   np.array(obj["coeffs"]), obj.get("diagnostics", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Predictor":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(design: DesignMatrix, y, rcond: float = RCOND) -> Predictor:
    y = np.asarray(y, dtype=float)
    if y.shape != (design.rows,):
        raise ValueError(f"need {design.rows} targets, got shape {y.shape}")
    coeffs, diag = lstsq_min_norm(design.data, y, rcond)
    return Predictor(design.mset, coeffs, diag)


def predict(p: Predictor, x):
    """Prediction for one vector (float) or for each row of a matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(featurize(x, p.mset) @ p.coeffs)
    return featurize_rows(x, p.mset) @ p.coeffs


@dataclass(frozen=True)
class MseEstimate:
    mean: float
    stderr: float
    n: int


def mse(p: Predictor, truth: Callable, spec: MeasureSpec, n_test: int, seed: int,
        stream: int = 1) -> MseEstimate:
    """Monte Carlo estimate of ``E[(p(X) - truth(X))^2]`` on fresh samples.

    ``truth`` maps an ``(n, d)`` array to ``n`` values.
    """
    if n_test < 1:
        raise ValueError("n_test must be positive")
    xs = sample_matrix(spec, n_test, p.mset.d, seed, stream)
    sq = (predict(p, xs) - np.asarray(truth(xs), dtype=float)) ** 2
    se = float(sq.std(ddof=1) / math.sqrt(n_test)) if n_test > 1 else math.nan
    return MseEstimate(float(sq.mean()), se, n_test)


def write_matrix(path, A) -> None:
    """Magic bytes, rows and cols as little-endian uint64, then float64 column-major."""
    A = np.asarray(A, dtype="<f8")
    if A.ndim == 1:
        A = A[:, None]
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", *A.shape))
        fh.write(A.tobytes(order="F"))


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(MATRIX_MAGIC)
    if raw[:head] != MATRIX_MAGIC:
        raise ValueError(f"{path}: not a matrix dump")
    if len(raw) < head + 16:
        raise ValueError(f"{path}: truncated header")
    rows, cols = struct.unpack("<QQ", raw[head:head + 16])
    body = raw[head + 16:]
    if len(body) != 8 * rows * cols:
        raise ValueError(f"{path}: expected {8 * rows * cols} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape((rows, cols), order="F").copy()


def first_primes(d: int) -> list:
    primes, n = [], 2
    while len(primes) < d:
        if all(n % p for p in primes):
            primes.append(n)
        n += 1
    return primes


def prime_power_inputs(d: int, N: int) -> np.ndarray:
    """Rows ``(p_1**i, ..., p_d**i)`` for ``i = 0..N-1`` over the first ``d`` primes.

    Monomial features of these rows form a Vandermonde matrix in the distinct
    nodes ``prod_j p_j**alpha_j``, so the square design is invertible.
    """
    p = np.array(first_primes(d), dtype=float)
    return p[None, :] ** np.arange(N)[:, None]


def prime_power_design_exact(mset: MultiplicitiesSet) -> list:
    """Integer entries of the square prime-power design, as Python ints."""
    primes = first_primes(mset.d)
    nodes = [math.prod(p ** a for p, a in zip(primes, alpha)) for alpha in mset]
    return [[z ** i for z in nodes] for i in range(len(mset))]
