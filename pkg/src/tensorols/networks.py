"""Fully connected teacher and student networks ``x -> a^T s(W_L ... s(W_1 x))``."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .approx import Activation
from .distributions import make_rng


class RowNorm(enum.Enum):
    L1_ROWS = "l1_rows"
    L2_SPHERE = "l2_sphere"


class NonHomogeneousActivationError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkParams:
    """Weights ``W_1 (m x d), W_2..W_L (m x m)``, output vector ``a`` and activation."""

    weights: tuple
    a: np.ndarray
    activation: Activation
    norm: Optional[RowNorm] = None
    nonneg_output: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ws = tuple(_frozen(w) for w in self.weights)
        if not ws:
            raise ValueError("at least one hidden layer is required")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "a", _frozen(self.a))
        m = ws[0].shape[0]
        for p, w in enumerate(ws[1:], start=2):
            if w.shape != (m, m):
                raise ValueError(f"layer {p} has shape {w.shape}, expected {(m, m)}")
        if self.a.shape != (m,):
            raise ValueError(f"output vector has shape {self.a.shape}, expected {(m,)}")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_l1(self) -> float:
        return float(np.abs(self.a).sum())

    def is_l1_normalized(self, tol: float = 1e-12) -> bool:
        rows = all(np.abs(w).sum(axis=1).max() <= 1 + tol for w in self.weights)
        return rows and self.output_l1 <= 1 + tol

    def to_dict(self) -> dict:
        return {
            "depth": self.depth, "width": self.width, "d": self.d,
            "weights": [w.ravel().tolist() for w in self.weights],
            "a": self.a.tolist(),
            "activation": self.activation.to_dict(),
            "norm": self.norm.value if self.norm else None,
            "nonneg_output": self.nonneg_output,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "NetworkParams":
        m, d = int(obj["width"]), int(obj["d"])
        ws = [np.array(obj["weights"][0], dtype=float).reshape(m, d)]
        ws += [np.array(w, dtype=float).reshape(m, m) for w in obj["weights"][1:]]
        norm = RowNorm(obj["norm"]) if obj.get("norm") else None
        return cls(tuple(ws), np.array(obj["a"]), Activation.from_dict(obj["activation"]),
                   norm, bool(obj.get("nonneg_output", False)))


def _ordered_product(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``h @ w.T`` accumulated strictly left to right over the shared index.

    Appending zero columns therefore leaves every sum bit-identical, which keeps
    zero-padded students exactly equal to their teachers.
    """
    out = h[:, :1] * w[:, 0]
    for k in range(1, w.shape[1]):
        out += h[:, k:k + 1] * w[:, k]
    return out


def hidden_output(net: NetworkParams, xs, activation=None) -> np.ndarray:
    """Last hidden layer for each row of ``xs``, shape ``(N, m)``."""
    act = activation if activation is not None else net.activation
    h = np.asarray(xs, dtype=float)
    if h.shape[-1] != net.d:
        raise ValueError(f"expected inputs of length {net.d}, got {h.shape[-1]}")
    for w in net.weights:
        h = act(_ordered_product(h, w))
    return h


def forward(net: NetworkParams, x, activation=None):
    """Network output for a vector (scalar result) or for each row of a matrix.

    ``activation`` overrides the network's own activation, e.g. with a
    polynomial surrogate.
    """
    x = np.asarray(x, dtype=float)
    out = _ordered_product(hidden_output(net, np.atleast_2d(x), activation), net.a[None, :])[:, 0]
    return float(out[0]) if x.ndim == 1 else out


def random_teacher(d: int, L: int, m: int, act: Activation, seed: int,
                   norm: RowNorm = RowNorm.L1_ROWS, nonneg_output: bool = False,
                   stream: int = 0) -> NetworkParams:
    """Gaussian weights rescaled so rows have unit l1 norm (``L1_ROWS``) or l2
    norm ``1/sqrt(d)`` (``L2_SPHERE``); the output vector has unit l1 norm.
    """
    if min(d, L, m) < 1:
        raise ValueError("d, L and m must be positive")
    rng = make_rng(seed, stream)
    ws = []
    for p in range(L):
        w = rng.standard_normal((m, d if p == 0 else m))
        if norm is RowNorm.L1_ROWS:
            w /= np.abs(w).sum(axis=1, keepdims=True)
        else:
            w /= np.linalg.norm(w, axis=1, keepdims=True) * math.sqrt(d)
        ws.append(w)
    a = rng.standard_normal(m)
    if nonneg_output:
        a = np.abs(a)
    a /= np.abs(a).sum()
    return NetworkParams(tuple(ws), a, act, norm, nonneg_output)


def embed_student(teacher: NetworkParams, new_width: int) -> NetworkParams:
    """Zero-pad the teacher to ``new_width`` hidden units; the function is unchanged."""
    m = teacher.width
    if new_width < m:
        raise ValueError(f"student width {new_width} is smaller than teacher width {m}")
    extra = new_width - m
    ws = [np.pad(teacher.weights[0], ((0, extra), (0, 0)))]
    ws += [np.pad(w, ((0, extra), (0, extra))) for w in teacher.weights[1:]]
    return NetworkParams(tuple(ws), np.pad(teacher.a, (0, extra)), teacher.activation,
                         teacher.norm, teacher.nonneg_output)


def cancellation_student(teacher: NetworkParams, z: int, v, nu: float) -> NetworkParams:
    """Append ``2z`` copies of direction ``v`` whose output weights alternate ``+nu``/``-nu``.

    Unit ``j`` (1-based) gets ``+nu`` when ``j`` is even and ``-nu`` when odd, so
    the added units cancel in pairs while ``||a||_1`` grows by ``2 z nu``.
    """
    if teacher.depth != 1:
        raise ValueError("cancellation construction needs a one-hidden-layer teacher")
    if z < 1:
        raise ValueError("z must be at least 1")
    if nu <= 0:
        raise ValueError("nu must be positive")
    v = np.asarray(v, dtype=float)
    if v.shape != (teacher.d,):
        raise ValueError(f"direction must have length {teacher.d}")
    m = teacher.width
    j = np.arange(m + 1, m + 2 * z + 1)
    extra_a = np.where(j % 2 == 0, nu, -nu)
    W = np.vstack([teacher.weights[0], np.tile(v, (2 * z, 1))])
    return NetworkParams((W,), np.concatenate([teacher.a, extra_a]), teacher.activation)


def homogeneous_rescale(net: NetworkParams, kappa: int) -> NetworkParams:
    """Scale each hidden row to l2 norm ``1/sqrt(d)`` and push the factor into ``a``.

    With ``theta_j = 1 / (sqrt(d) ||W_j||_2)`` the row becomes ``theta_j W_j`` and
    ``a_j`` becomes ``a_j theta_j**(-kappa)``. Zero rows get ``a_j = 0``.
    """
    if net.depth != 1:
        raise ValueError("rescaling is defined for one hidden layer")
    if net.activation.homogeneity_degree() != kappa:
        raise NonHomogeneousActivationError(
            f"activation {net.activation.kind.value} is not positively homogeneous of degree {kappa}")
    W = np.array(net.weights[0])
    a = np.array(net.a)
    norms = np.linalg.norm(W, axis=1)
    for j, n in enumerate(norms):
        if n == 0.0:
            a[j] = 0.0
            continue
        theta = 1.0 / (math.sqrt(net.d) * n)
        if theta != 1.0:
            W[j] *= theta
            a[j] *= theta ** (-kappa)
    return NetworkParams((W,), a, net.activation, RowNorm.L2_SPHERE, net.nonneg_output)


def self_regularization_bound(d: int, kappa: int, teacher_l1: float) -> float:
    """Upper bound ``d**(kappa+1) * 2**(kappa+1) * ||a*||_1`` on the student output norm."""
    return float(d) ** (kappa + 1) * 2.0 ** (kappa + 1) * teacher_l1


def _poly_mul(p: dict, q: dict) -> dict:
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            key = tuple(x + y for x, y in zip(a, b))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def polynomial_expansion(net: NetworkParams) -> dict:
    """Monomial coefficients ``{alpha: coeff}`` of a polynomial-activation network."""
    coeffs = net.activation.coeffs
    if net.activation.poly_degree is None:
        raise ValueError("expansion needs a polynomial activation")
    d = net.d
    one = {(0,) * d: 1.0}
    # each input coordinate as a polynomial in x
    h = [{tuple(int(i == j) for i in range(d)): 1.0} for j in range(d)]
    for w in net.weights:
        nxt = []
        for row in w:
            z = {}
            for wj, hj in zip(row, h):
                if wj != 0.0:
                    for key, c in hj.items():
                        z[key] = z.get(key, 0.0) + wj * c
            acc, power = {}, one
            for i, c in enumerate(coeffs):
                if i:
                    power = _poly_mul(power, z)
                if c != 0.0:
                    for key, v in power.items():
                        acc[key] = acc.get(key, 0.0) + c * v
            nxt.append(acc)
        h = nxt
    out = {}
    for aj, hj in zip(net.a, h):
        for key, c in hj.items():
            out[key] = out.get(key, 0.0) + aj * c
    return out
