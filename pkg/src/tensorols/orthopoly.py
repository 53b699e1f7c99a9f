"""Orthonormal polynomials of a measure, the tensor-feature covariance and its spectrum.

Univariate polynomials are stored as ascending monomial coefficient arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import MeasureSpec, exact_moments, support_cardinality
from .tensorize import MultiplicitiesSet, featurize_rows, full_count, omega

CROSSCHECK_TOL = 1e-10


class SingularHankelError(ArithmeticError):
    """Hankel determinant is not positive; the degree exceeds what the support allows."""


def hankel(moments, n: int) -> np.ndarray:
    """``(n+1) x (n+1)`` moment matrix ``(c_{i+j})``."""
    c = np.asarray(moments, dtype=float)
    i = np.arange(n + 1)
    return c[i[:, None] + i[None, :]]


def hankel_determinants(moments, K: int) -> np.ndarray:
    """``D_0..D_K``."""
    return np.array([np.linalg.det(hankel(moments, n)) for n in range(K + 1)])


def _inner(p, q, c) -> float:
    # E[p(X) q(X)] from raw moments
    return float(np.convolve(p, q) @ c[:len(p) + len(q) - 1])


def gram_schmidt(moments, K: int) -> list:
    """Orthonormalize ``1, x, ..., x^K`` under ``<p, q> = E[p(X) q(X)]``."""
    c = np.asarray(moments, dtype=float)
    polys = []
    for i in range(K + 1):
        v = np.zeros(i + 1)
        v[i] = 1.0
        for _ in range(2):  # second pass cleans up cancellation
            for t in polys:
                v[:len(t)] -= _inner(v, t, c) * t
        nrm2 = _inner(v, v, c)
        if nrm2 <= 0.0:
            raise SingularHankelError(f"monomial x^{i} is dependent on lower degrees")
        polys.append(v / math.sqrt(nrm2))
    return polys


def determinant_polynomial(moments, i: int, D: np.ndarray) -> np.ndarray:
    """Coefficients of ``det(P_i(x)) / sqrt(D_i D_{i-1})``.

    ``P_i(x)`` stacks the first ``i`` rows of the order-``i`` Hankel matrix on
    top of the row ``(1, x, ..., x^i)``; the determinant is expanded along that row.
    """
    if i == 0:
        return np.ones(1)
    top = hankel(moments, i)[:i]
    coef = np.array([(-1) ** (i + m) * np.linalg.det(np.delete(top, m, axis=1))
                     for m in range(i + 1)])
    return coef / math.sqrt(D[i] * D[i - 1])


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal polynomials ``T_0..T_K`` of a measure together with its Hankel data.

    Attributes
    ----------
    measure : MeasureSpec
    k : int
        Requested degree.
    order : int
        ``K = omega(P, k)``.
    moments : np.ndarray
        ``c_0..c_{2K}``.
    hankel : np.ndarray
        ``D_0..D_K``.
    polys : tuple of np.ndarray
        Gram-Schmidt coefficients of ``T_0..T_K``.
    crosscheck_error : float
        Largest coefficient gap to the determinant construction.
    """

    measure: MeasureSpec
    k: int
    order: int
    moments: np.ndarray
    hankel: np.ndarray
    polys: tuple
    crosscheck_error: float

    def ratio(self, i: int) -> float:
        """``D_i / D_{i-1}`` with ``D_{-1} = 1``."""
        return float(self.hankel[i] / (self.hankel[i - 1] if i > 0 else 1.0))

    def evaluate(self, i: int, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.polys[i])

    def monomial_projection(self, i: int, j: int) -> float:
        """``E[X^i T_j(X)]`` from the moments (needs ``i + j <= 2K``)."""
        t = self.polys[j]
        return float(t @ self.moments[i:i + len(t)])

    def projection_table(self) -> np.ndarray:
        """``E[X^i T_j]`` for ``0 <= i, j <= K``."""
        K = self.order
        return np.array([[self.monomial_projection(i, j) for j in range(K + 1)]
                         for i in range(K + 1)])


def build_basis(spec: MeasureSpec, k: int) -> OrthoBasis:
    if k < 0:
        raise ValueError("k must be non-negative")
    K = omega(support_cardinality(spec), k)
    c = exact_moments(spec, 2 * K).as_array()
    D = hankel_determinants(c, K)
    if np.any(D <= 0.0):
        raise SingularHankelError(f"non-positive Hankel determinant in {D}")
    polys = gram_schmidt(c, K)
    gap = 0.0
    for i, t in enumerate(polys):
        alt = determinant_polynomial(c, i, D)
        gap = max(gap, float(np.max(np.abs(alt - t))))
    scale = max(1.0, float(np.linalg.cond(hankel(c, K))))
    if gap > CROSSCHECK_TOL * scale:
        raise ArithmeticError(f"orthonormal constructions disagree by {gap:.3e}")
    return OrthoBasis(spec, k, K, c, D, tuple(polys), gap)


def multivariate_T(basis: OrthoBasis, alpha) -> Callable:
    """Evaluator of ``prod_i T_{alpha_i}(x_i)`` on a vector or on rows of a matrix."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 or a > basis.order for a in alpha):
        raise ValueError(f"exponents of {alpha} exceed the basis order {basis.order}")

    def T(x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != len(alpha):
            raise ValueError(f"expected length-{len(alpha)} inputs")
        out = np.ones(x.shape[:-1])
        for i, a in enumerate(alpha):
            if a:
                out = out * basis.evaluate(a, x[..., i])
        return out

    return T


def sigma_exact(spec: MeasureSpec, mset: MultiplicitiesSet) -> np.ndarray:
    """``E[X X^T]`` for the monomial feature vector ``X`` indexed by ``mset``.

    Coordinates are i.i.d., so ``E[x^(alpha+beta)] = prod_i c_{alpha_i + beta_i}``
    with correctly rounded univariate moments ``c``. Unlike summing over the
    product support, this keeps entries such as ``E[1] = 1`` exact.
    """
    exps = mset.exponents
    c = exact_moments(spec, 2 * int(exps.max(initial=0))).as_array()
    S = np.ones((len(mset), len(mset)))
    for i in range(mset.d):
        S *= c[exps[:, i][:, None] + exps[:, i][None, :]]
    return S


@dataclass(frozen=True)
class EigenBounds:
    c: float
    f: float
    C: float
    count: int
    lambda_min_lb: float
    lambda_max_ub: float
    kappa_ub: float
    kappa_claim_applies: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def eigen_bounds(spec: MeasureSpec, k: int, d: int) -> EigenBounds:
    """Dimension-free constants and the eigenvalue/condition bounds built from them.

    ``kappa_ub = C * d**(3k)`` is only claimed for ``d >= 4``.
    """
    basis = build_basis(spec, k)
    w = basis.order
    ratios = np.array([basis.ratio(i) for i in range(w + 1)])
    c = min(float(np.min(ratios)) ** (k / 2), 1.0)
    top_moment = float(exact_moments(spec, 2 * w)[2 * w])
    f = (max(top_moment ** k, 1.0) * max(float(np.max(ratios)) ** k, 1.0)
         / min(float(np.min(ratios)) ** k, 1.0))
    C = f / c
    count = full_count(d, k)
    return EigenBounds(c, f, C, count, c / count, f * count, C * float(d) ** (3 * k), d >= 4)


@dataclass(frozen=True)
class SigmaDecomposition:
    """``Sigma = V diag(Ddiag) V^T`` with ``V[a, b] = E[X_a T_b] / E[X_b T_b]``."""

    mset: MultiplicitiesSet
    Sigma: np.ndarray
    V: np.ndarray
    Ddiag: np.ndarray
    bounds: EigenBounds

    def reconstruct(self) -> np.ndarray:
        return (self.V * self.Ddiag) @ self.V.T


def cross_moments(basis: OrthoBasis, mset: MultiplicitiesSet) -> np.ndarray:
    """``E[X_alpha T_beta]`` for all index pairs, by independence across coordinates."""
    table = basis.projection_table()
    exps = mset.exponents
    out = np.ones((len(mset), len(mset)))
    for i in range(mset.d):
        out *= table[exps[:, i][:, None], exps[:, i][None, :]]
    return out


def decompose(spec: MeasureSpec, mset: MultiplicitiesSet) -> SigmaDecomposition:
    basis = build_basis(spec, mset.M)
    if mset.s_cap > basis.order:
        raise ValueError("index set exceeds the exponent cap of the measure")
    Sigma = sigma_exact(spec, mset)
    E = cross_moments(basis, mset)
    diag = np.diag(E).copy()
    V = E / diag[None, :]
    return SigmaDecomposition(mset, Sigma, V, diag ** 2, eigen_bounds(spec, mset.M, mset.d))
