"""Uniform polynomial approximation of activations on [-1, 1]."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as P

GRID_SIZE = 10_001
DEFAULT_MAX_DEGREE = 200
# Chebyshev coefficients are estimated from this many Gauss-Chebyshev nodes
_QUADRATURE_NODES = 4096


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    POLYNOMIAL = "polynomial"


class DegreeBudgetError(RuntimeError):
    """No polynomial up to the degree cap meets the requested accuracy."""


@dataclass(frozen=True)
class Activation:
    kind: ActivationKind
    coeffs: tuple = ()

    def __post_init__(self):
        if self.kind is ActivationKind.POLYNOMIAL:
            if not self.coeffs or not all(math.isfinite(c) for c in self.coeffs):
                raise ValueError("polynomial activation needs finite coefficients")

    @classmethod
    def relu(cls) -> "Activation":
        return cls(ActivationKind.RELU)

    @classmethod
    def sigmoid(cls) -> "Activation":
        return cls(ActivationKind.SIGMOID)

    @classmethod
    def polynomial(cls, coeffs) -> "Activation":
        """Polynomial with ascending monomial coefficients."""
        c = [float(v) for v in coeffs]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        return cls(ActivationKind.POLYNOMIAL, tuple(c))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is ActivationKind.RELU:
            return np.maximum(x, 0.0)
        if self.kind is ActivationKind.SIGMOID:
            return 0.5 * (1.0 + np.tanh(0.5 * x))
        return P.polyval(x, self.coeffs)

    @property
    def poly_degree(self) -> Optional[int]:
        return len(self.coeffs) - 1 if self.kind is ActivationKind.POLYNOMIAL else None

    def homogeneity_degree(self) -> Optional[int]:
        """``kappa`` with ``sigma(t z) = t**kappa sigma(z)`` for ``t > 0``, or None."""
        if self.kind is ActivationKind.RELU:
            return 1
        if self.kind is ActivationKind.POLYNOMIAL:
            nz = [i for i, c in enumerate(self.coeffs) if c != 0.0]
            if len(nz) == 1 and nz[0] >= 1:
                return nz[0]
        return None

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is ActivationKind.POLYNOMIAL:
            out["coeffs"] = list(self.coeffs)
        return out

    @classmethod
    def from_dict(cls, obj) -> "Activation":
        if isinstance(obj, str):
            obj = {"kind": obj}
        kind = ActivationKind(obj["kind"])
        if kind is ActivationKind.POLYNOMIAL:
            return cls.polynomial(obj["coeffs"])
        return cls(kind)


@dataclass(frozen=True)
class PolyApprox:
    coeffs: tuple
    achieved_sup_error: float
    epsilon_target: float
    grid_size: int = GRID_SIZE
    squeezed: bool = False

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return P.polyval(np.asarray(x, dtype=float), self.coeffs)

    def as_activation(self) -> Activation:
        return Activation.polynomial(self.coeffs)

    def to_dict(self) -> dict:
        return {"coeffs": list(self.coeffs), "degree": self.degree,
                "epsilon_target": self.epsilon_target,
                "achieved_sup_error": self.achieved_sup_error,
                "grid_size": self.grid_size, "squeezed": self.squeezed}

    @classmethod
    def from_dict(cls, obj: dict) -> "PolyApprox":
        return cls(tuple(obj["coeffs"]), float(obj["achieved_sup_error"]),
                   float(obj["epsilon_target"]), int(obj.get("grid_size", GRID_SIZE)),
                   bool(obj.get("squeezed", False)))


def certification_grid(size: int = GRID_SIZE) -> np.ndarray:
    """Equispaced points on [-1, 1]; odd ``size`` puts 0 exactly on the grid."""
    half = (size - 1) // 2
    if size % 2 == 1:
        return np.arange(-half, half + 1) / half
    return np.linspace(-1.0, 1.0, size)


def chebyshev_coefficients(f, n: int, nodes: int = _QUADRATURE_NODES) -> np.ndarray:
    """First ``n + 1`` Chebyshev series coefficients of ``f`` on [-1, 1].

    Uses Gauss-Chebyshev quadrature of ``(2/pi) * int f(x) T_j(x) / sqrt(1 - x^2)``.
    """
    theta = (np.arange(nodes) + 0.5) * np.pi / nodes
    fx = f(np.cos(theta))
    j = np.arange(n + 1)
    coef = (2.0 / nodes) * np.cos(np.outer(j, theta)) @ fx
    coef[0] *= 0.5
    return coef


def _squeeze_into_unit(mono: np.ndarray, values: np.ndarray):
    lo, hi = min(values.min(), 0.0), max(values.max(), 1.0)
    if lo == 0.0 and hi == 1.0:
        return mono, False
    out = mono / (hi - lo)
    out[0] -= lo / (hi - lo)
    return out, True


def approximate(act: Activation, epsilon: float, max_degree: int = DEFAULT_MAX_DEGREE,
                grid_size: int = GRID_SIZE) -> PolyApprox:
    """Lowest-degree truncated Chebyshev series within ``epsilon`` of ``act``.

    The candidate of each degree is squeezed affinely into [0, 1] when its range
    leaves that interval, and the error is certified on the final monomial form.
    """
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must lie in (0, 1]")
    if act.kind is ActivationKind.POLYNOMIAL:
        return PolyApprox(act.coeffs, 0.0, epsilon, grid_size)
    grid = certification_grid(grid_size)
    target = act(grid)
    series = chebyshev_coefficients(act, max_degree)
    for r in range(1, max_degree + 1):
        mono = C.cheb2poly(series[:r + 1])
        mono, squeezed = _squeeze_into_unit(mono, P.polyval(grid, mono))
        vals = P.polyval(grid, mono)
        err = float(np.max(np.abs(vals - target)))
        if err <= epsilon and vals.min() >= 0.0 and vals.max() <= 1.0:
            return PolyApprox(tuple(mono), err, epsilon, grid_size, squeezed)
    raise DegreeBudgetError(f"no degree <= {max_degree} reaches sup error {epsilon}")


@dataclass(frozen=True)
class DegreeSchedule:
    epsilon_layer: float
    layer_degree: int
    M: int
    approx: PolyApprox


def degree_schedule(act: Activation, L: int, epsilon: float, budget: float = 4.0,
                    max_degree: int = DEFAULT_MAX_DEGREE) -> DegreeSchedule:
    """Per-layer accuracy ``sqrt(epsilon / (budget * L**2))`` and total degree ``r**L``.

    ``budget=4`` gives ``sqrt(epsilon) / (2 L)``; ``budget=16`` the tighter variant.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must lie in (0, 1]")
    eps_layer = math.sqrt(epsilon / (budget * L * L))
    pa = approximate(act, eps_layer, max_degree=max_degree)
    return DegreeSchedule(eps_layer, pa.degree, pa.degree ** L, pa)
