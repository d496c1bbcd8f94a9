"""Sum-of-subnetworks three-layer tanh model with closed-form derivatives.

Parameters of the A subnetworks are stored stacked along a leading axis:

    W1 (A, m1, d)   b1 (A, m1)
    W2 (A, m2, m1)  b2 (A, m2)
    W3 (A, m2)      b3 (A,)

All batched routines take points as an (n, d) array.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterator, NamedTuple

import numpy as np

BLOCKS = ("W1", "b1", "W2", "b2", "W3", "b3")


def default_widths(d: int) -> tuple[int, int]:
    """Widths m1 = 5d and m2 = C(2d+1, d+1)."""
    return 5 * d, comb(2 * d + 1, d + 1)


class SubnetParams(NamedTuple):
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: float


@dataclass(frozen=True, eq=False)
class _Blocks:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in BLOCKS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        A, m1, d = self.W1.shape
        m2 = self.W2.shape[1]
        expected = {
            "b1": (A, m1), "W2": (A, m2, m1), "b2": (A, m2),
            "W3": (A, m2), "b3": (A,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def A(self) -> int:
        return self.W1.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        """(d, m1, m2)."""
        return self.W1.shape[2], self.W1.shape[1], self.W2.shape[1]

    def blocks(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, name) for name in BLOCKS)

    def flatten(self) -> np.ndarray:
        """Flat vector in per-subnet block order W1, b1, W2, b2, W3, b3."""
        return np.concatenate(
            [np.concatenate([getattr(self, name)[s].ravel() for name in BLOCKS])
             for s in range(self.A)]
        )

    @classmethod
    def unflatten(cls, flat, A: int, dims: tuple[int, int, int]):
        d, m1, m2 = dims
        sizes = [m1 * d, m1, m2 * m1, m2, m2, 1]
        per = sum(sizes)
        flat = np.asarray(flat, dtype=float)
        if flat.size != A * per:
            raise ValueError(f"expected {A * per} values, got {flat.size}")
        rows = flat.reshape(A, per)
        offsets = np.cumsum([0] + sizes)
        shapes = [(m1, d), (m1,), (m2, m1), (m2,), (m2,), ()]
        parts = {
            name: rows[:, offsets[i]:offsets[i + 1]].reshape((A,) + shapes[i])
            for i, name in enumerate(BLOCKS)
        }
        return cls(**parts)

    def map(self, fn, *others):
        return type(self)(**{
            name: fn(getattr(self, name), *(getattr(o, name) for o in others))
            for name in BLOCKS
        })

    def __add__(self, other):
        return self.map(np.add, other)

    def __sub__(self, other):
        return self.map(np.subtract, other)

    def __mul__(self, a: float):
        return self.map(lambda x: a * x)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(b * b) for b in self.blocks())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(b)) for b in self.blocks())

    def equal(self, other) -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.blocks(), other.blocks()))


class NetParams(_Blocks):
    """Weights and biases of all subnetworks."""

    @property
    def subnets(self) -> list[SubnetParams]:
        return [
            SubnetParams(self.W1[s], self.b1[s], self.W2[s], self.b2[s], self.W3[s], float(self.b3[s]))
            for s in range(self.A)
        ]

    @classmethod
    def from_subnets(cls, subnets) -> "NetParams":
        subnets = list(subnets)
        if not subnets:
            raise ValueError("need at least one subnetwork")
        return cls(*(np.stack([np.asarray(sub[i], dtype=float) for sub in subnets]) for i in range(6)))

    @classmethod
    def zeros(cls, A: int, dims: tuple[int, int, int]) -> "NetParams":
        d, m1, m2 = dims
        return cls(np.zeros((A, m1, d)), np.zeros((A, m1)), np.zeros((A, m2, m1)),
                   np.zeros((A, m2)), np.zeros((A, m2)), np.zeros(A))

    def with_outer(self, W3, b3) -> "NetParams":
        return NetParams(self.W1, self.b1, self.W2, self.b2, W3, b3)

    def __iter__(self) -> Iterator[SubnetParams]:
        return iter(self.subnets)


class ParamGrad(_Blocks):
    """Derivative of a scalar with respect to every block of a NetParams."""


@dataclass(frozen=True, eq=False)
class EvalTrace:
    """Cached activations at a batch of points; hidden arrays are (A, n, width)."""

    x: np.ndarray
    f1org: np.ndarray
    f1: np.ndarray
    f2org: np.ndarray
    f2: np.ndarray
    value: np.ndarray
    grad_x: np.ndarray
    # tanh' and tanh'' at both hidden layers
    s1: np.ndarray
    s2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    # backpropagated signals: delta2 = s2 * W3, g1 = W2^T delta2, delta1 = s1 * g1
    delta2: np.ndarray
    g1: np.ndarray
    delta1: np.ndarray


def _as_points(params: _Blocks, x) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    d = params.dims[0]
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"points must have dimension {d}, got shape {np.shape(x)}")
    return X


def _T(a: np.ndarray) -> np.ndarray:
    return a.transpose(0, 2, 1)


def evaluate(params: NetParams, X) -> EvalTrace:
    """Forward pass plus first-order quantities at the points X (n, d)."""
    X = _as_points(params, X)
    f1org = X @ _T(params.W1) + params.b1[:, None, :]
    f1 = np.tanh(f1org)
    f2org = f1 @ _T(params.W2) + params.b2[:, None, :]
    f2 = np.tanh(f2org)
    value = (f2 @ params.W3[:, :, None])[:, :, 0].sum(axis=0) + params.b3.sum()
    s1 = 1.0 - f1 * f1
    s2 = 1.0 - f2 * f2
    delta2 = s2 * params.W3[:, None, :]
    g1 = delta2 @ params.W2
    delta1 = s1 * g1
    grad_x = (delta1 @ params.W1).sum(axis=0)
    return EvalTrace(
        x=X, f1org=f1org, f1=f1, f2org=f2org, f2=f2, value=value, grad_x=grad_x,
        s1=s1, s2=s2, t1=-2.0 * f1 * s1, t2=-2.0 * f2 * s2,
        delta2=delta2, g1=g1, delta1=delta1,
    )


def forward(params: NetParams, x):
    """f_W(x). A single point returns a float, a batch (n, d) an array."""
    single = np.ndim(x) == 1
    value = evaluate(params, x).value
    return float(value[0]) if single else value


def grad_x(params: NetParams, x) -> np.ndarray:
    """Spatial gradient; shape (d,) for one point, (n, d) for a batch."""
    single = np.ndim(x) == 1
    g = evaluate(params, x).grad_x
    return g[0] if single else g


def param_grad_weighted(params: NetParams, tr: EvalTrace, weights) -> ParamGrad:
    """sum_i weights[i] * d f_W(x_i) / d(params)."""
    c = np.asarray(weights, dtype=float)
    cd1 = tr.delta1 * c[:, None]
    cd2 = tr.delta2 * c[:, None]
    return ParamGrad(
        W1=_T(cd1) @ tr.x,
        b1=cd1.sum(axis=1),
        W2=_T(cd2) @ tr.f1,
        b2=cd2.sum(axis=1),
        W3=c @ tr.f2,
        b3=np.full(params.A, c.sum()),
    )


def spatial_param_grad_weighted(params: NetParams, tr: EvalTrace, E) -> ParamGrad:
    """sum_i d/d(params) [ E[i] . grad_x f_W(x_i) ].

    Taking E[i] = e_j gives the parameter gradient of df/dx_j; taking
    E[i] = c_i grad_x f_W(x_i) gives the gradient of sum_i c_i |grad f|^2 / 2.
    """
    E = np.asarray(E, dtype=float)
    if E.shape != tr.x.shape:
        raise ValueError(f"direction array must have shape {tr.x.shape}")
    # directional derivatives along E of the hidden-layer quantities
    w1e = E @ _T(params.W1)
    q = tr.s1 * w1e                                          # f1
    r = q @ _T(params.W2)                                    # f2org
    h2 = r * tr.t2 * params.W3[:, None, :]                   # delta2
    gb1 = tr.t1 * w1e * tr.g1 + tr.s1 * (h2 @ params.W2)     # delta1
    return ParamGrad(
        W1=_T(tr.delta1) @ E + _T(gb1) @ tr.x,
        b1=gb1.sum(axis=1),
        W2=_T(tr.delta2) @ q + _T(h2) @ tr.f1,
        b2=h2.sum(axis=1),
        W3=(tr.s2 * r).sum(axis=1),
        b3=np.zeros(params.A),
    )


def grad_params(params: NetParams, x) -> ParamGrad:
    """d f_W(x) / d(every block) at a single point."""
    tr = evaluate(params, np.asarray(x, dtype=float).reshape(1, -1))
    return param_grad_weighted(params, tr, np.ones(1))


def grad_params_of_spatial(params: NetParams, x, j: int) -> ParamGrad:
    """d (df_W/dx_j)(x) / d(every block); j is 1-based."""
    d = params.dims[0]
    if not 1 <= j <= d:
        raise ValueError(f"axis index must lie in 1..{d}, got {j}")
    tr = evaluate(params, np.asarray(x, dtype=float).reshape(1, -1))
    E = np.zeros((1, d))
    E[0, j - 1] = 1.0
    return spatial_param_grad_weighted(params, tr, E)


def random_params(rng: np.random.Generator, A: int, dims, scale: float = 1.0) -> NetParams:
    """Every entry i.i.d. N(0, scale^2); used by checks and tests."""
    d, m1, m2 = dims
    return NetParams(
        scale * rng.standard_normal((A, m1, d)), scale * rng.standard_normal((A, m1)),
        scale * rng.standard_normal((A, m2, m1)), scale * rng.standard_normal((A, m2)),
        scale * rng.standard_normal((A, m2)), scale * rng.standard_normal(A),
    )


def save_params(path, params: NetParams) -> None:
    """Raw little-endian doubles in flatten() order; no header."""
    params.flatten().astype("<f8").tofile(path)


def load_params(path, A: int, dims) -> NetParams:
    return NetParams.unflatten(np.fromfile(path, dtype="<f8"), A, dims)
