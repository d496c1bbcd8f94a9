"""Monte Carlo error norms, generalization gaps, complexity bounds and rate fits."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import sqrt

import numpy as np

from .loss import discrete_loss
from .network import NetParams, evaluate
from .problems import Domain, ExactSolution, ProblemSpec, SampleSet, measures, sample_interior

# max |tanh''| = 4 / (3 sqrt 3), attained at tanh = 1/sqrt(3)
TANH_SECOND_SUP = 4.0 / (3.0 * sqrt(3.0))


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    h1_semi: float
    h1: float
    mc_stderr: float
    n_eval: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def mc_h1_error(params: NetParams, exact: ExactSolution, domain: Domain, n_eval: int,
                seed) -> ErrorReport:
    """H^1 error of the network against exact by uniform Monte Carlo.

    mc_stderr is the standard error of h1, propagated from the sample variance
    of the squared-error integrand (delta method).
    """
    if exact is None:
        raise ValueError("no exact solution supplied")
    if n_eval < 100:
        raise ValueError("n_eval must be at least 100")
    X = sample_interior(domain, n_eval, seed)
    tr = evaluate(params, X)
    return h1_error_at(tr.value, tr.grad_x, exact, X, domain)


def h1_error_at(values, grads, exact: ExactSolution, X, domain: Domain) -> ErrorReport:
    vol, _ = measures(domain)
    e0 = (np.asarray(values) - exact.u(X)) ** 2
    e1 = np.sum((np.asarray(grads) - exact.gradient(X)) ** 2, axis=1)
    l2sq = vol * float(np.mean(e0))
    semisq = vol * float(np.mean(e1))
    h1 = sqrt(l2sq + semisq)
    n = len(X)
    var = float(np.var(e0 + e1, ddof=1)) if n > 1 else 0.0
    se_sq = vol * sqrt(var / n)
    se = se_sq / (2.0 * h1) if h1 > 0 else 0.0
    return ErrorReport(sqrt(l2sq), sqrt(semisq), h1, se, n)


def generalization_gap(params: NetParams, prob: ProblemSpec, train_samples: SampleSet,
                       eval_samples: SampleSet) -> float:
    """|L(train) - L(eval)|, a probe of sup |L - L_hat| at one network."""
    return abs(discrete_loss(params, prob, train_samples).total
               - discrete_loss(params, prob, eval_samples).total)


@dataclass(frozen=True)
class ComplexityBounds:
    B_F1: float
    B_F2: float
    B_F3: float
    B_F4: float
    B_F5: float
    # value and gradient bounds behind B_F3 / B_F5
    value_bound: float
    grad_bound: float

    def to_record(self) -> dict:
        return asdict(self)


def activation_constants() -> tuple[float, float, float]:
    """(B_sigma, B_sigma', B_sigma'') for tanh, each clamped below by 1."""
    return 1.0, 1.0, max(TANH_SECOND_SUP, 1.0)


def complexity_bounds(m1: int, m2: int, d: int, B_inn: float, B_out: float) -> ComplexityBounds:
    """C^1 bounds of the five loss-integrand classes over the network class."""
    if min(m1, m2, d) < 1 or B_inn <= 0 or B_out <= 0:
        raise ValueError("inputs must be positive")
    bs, bs1, bs2 = activation_constants()
    f1 = 2 * d * m2**2 * m1**1.5 * bs1**4 * bs2 * B_inn**5 * B_out**2
    f2 = 2 * m2**2 * sqrt(m1) * bs**2 * bs1**2 * B_inn * B_out**2
    f3 = m2 * sqrt(m1) * bs * bs1**2 * B_inn * B_out
    return ComplexityBounds(
        B_F1=f1, B_F2=f2, B_F3=f3, B_F4=f2, B_F5=f3,
        value_bound=m2 * bs * B_out,
        grad_bound=m2 * sqrt(m1) * bs1**2 * B_inn * B_out,
    )


def class_norms(params: NetParams) -> tuple[float, float]:
    """Smallest (B_inn, B_out) for which params lies in the network class.

    B_inn bounds every inner Frobenius/Euclidean norm; B_out is the l1 norm
    of all outer-layer entries.
    """
    inner = []
    for name in ("W1", "b1", "W2", "b2"):
        block = getattr(params, name).reshape(params.A, -1)
        inner.append(np.sqrt(np.sum(block**2, axis=1)).max())
    outer = np.abs(params.W3).sum() + np.abs(params.b3).sum()
    return float(max(inner)), float(outer)


def empirical_rate(pairs) -> float:
    """Least-squares slope of log(error) against log(n)."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ValueError("need at least three (n, error) pairs")
    if np.any(arr <= 0):
        raise ValueError("sample sizes and errors must be positive")
    slope, _ = np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)
    return float(slope)
