"""Discrete Ritz losses, their parameter gradients, and the energy-excess split."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .network import (NetParams, ParamGrad, evaluate, param_grad_weighted,
                      spatial_param_grad_weighted)
from .problems import ProblemSpec, SampleSet

TERM_NAMES = ("grad_energy", "mass", "source", "bdry_mass", "bdry_source")


@dataclass(frozen=True)
class LossBreakdown:
    """Loss value split into its five sample averages.

    stderr is the Monte Carlo standard error of total, from the per-sample
    variance of the interior and boundary summands.
    """

    grad_energy: float
    mass: float
    source: float
    bdry_mass: float
    bdry_source: float
    stderr: float = 0.0

    @property
    def terms(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in TERM_NAMES)

    @property
    def total(self) -> float:
        return float(sum(self.terms))

    def to_record(self) -> dict:
        rec = {"total": self.total}
        rec.update({k: getattr(self, k) for k in TERM_NAMES})
        rec["stderr"] = self.stderr
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record())


def _boundary_factor(prob: ProblemSpec) -> float:
    if prob.bc == "neumann":
        return 1.0
    if not prob.beta:
        raise ValueError("beta must be nonzero")
    return 1.0 / prob.beta


def _check_samples(samples: SampleSet) -> None:
    if samples.n == 0 or samples.m == 0:
        raise ValueError("sample set must contain interior and boundary points")


@dataclass(frozen=True, eq=False)
class _Pointwise:
    """Per-sample field values shared by the loss, its gradient and diagnostics."""

    trace_in: object
    trace_bd: object
    w: np.ndarray
    f: np.ndarray
    g: np.ndarray


def _pointwise(params: NetParams, prob: ProblemSpec, samples: SampleSet,
               evaluator=evaluate) -> _Pointwise:
    _check_samples(samples)
    X, Y = samples.interior, samples.boundary
    return _Pointwise(
        evaluator(params, X), evaluator(params, Y),
        np.asarray(prob.w(X), dtype=float), np.asarray(prob.f(X), dtype=float),
        np.asarray(prob.g(Y, samples.normals), dtype=float),
    )


def _stderr(vals: np.ndarray, scale: float) -> float:
    if len(vals) < 2:
        return 0.0
    return float(scale * np.std(vals, ddof=1) / np.sqrt(len(vals)))


def _breakdown(prob, samples, u_in, du_in, u_bd, pw: _Pointwise) -> LossBreakdown:
    vol, n = samples.vol, samples.n
    area, m = samples.area, samples.m
    ge = 0.5 * np.sum(du_in * du_in, axis=1)
    ms = 0.5 * pw.w * u_in * u_in
    src = -pw.f * u_in
    interior = ge + ms + src
    if prob.bc == "neumann":
        bm = np.zeros(m)
        bs = -pw.g * u_bd
        bfac = area
    else:
        bm = 0.5 * u_bd * u_bd
        bs = -pw.g * u_bd
        bfac = area / prob.beta
    se = np.hypot(_stderr(interior, vol), _stderr(bm + bs, bfac))
    return LossBreakdown(
        grad_energy=float(vol * np.sum(ge) / n),
        mass=float(vol * np.sum(ms) / n),
        source=float(vol * np.sum(src) / n),
        bdry_mass=float(bfac * np.sum(bm) / m),
        bdry_source=float(bfac * np.sum(bs) / m),
        stderr=float(se),
    )


def _loss(params, prob, samples, expected_bc) -> LossBreakdown:
    if prob.bc not in expected_bc:
        raise ValueError(f"problem has bc={prob.bc!r}, expected one of {expected_bc}")
    _boundary_factor(prob)
    pw = _pointwise(params, prob, samples)
    return _breakdown(prob, samples, pw.trace_in.value, pw.trace_in.grad_x,
                      pw.trace_bd.value, pw)


def discrete_loss_robin(params: NetParams, prob: ProblemSpec, samples: SampleSet) -> LossBreakdown:
    """Robin loss; Dirichlet problems go through here as the penalised Robin form."""
    return _loss(params, prob, samples, ("robin", "dirichlet"))


def discrete_loss_neumann(params: NetParams, prob: ProblemSpec, samples: SampleSet) -> LossBreakdown:
    return _loss(params, prob, samples, ("neumann",))


def discrete_loss(params: NetParams, prob: ProblemSpec, samples: SampleSet) -> LossBreakdown:
    if prob.bc == "neumann":
        return discrete_loss_neumann(params, prob, samples)
    return discrete_loss_robin(params, prob, samples)


def loss_and_gradient(params: NetParams, prob: ProblemSpec, samples: SampleSet,
                      evaluator=evaluate) -> tuple[LossBreakdown, ParamGrad]:
    """Loss and its exact parameter gradient from one pair of forward passes.

    evaluator produces the cached traces; checks substitute a faulty one.
    """
    bfac = samples.area * _boundary_factor(prob)
    pw = _pointwise(params, prob, samples, evaluator)
    tin, tbd = pw.trace_in, pw.trace_bd
    br = _breakdown(prob, samples, tin.value, tin.grad_x, tbd.value, pw)
    cin = samples.vol / samples.n
    cbd = bfac / samples.m
    # grad of 0.5|grad f|^2 is sum_j (d_j f) grad_W(d_j f): one directional pass
    g = spatial_param_grad_weighted(params, tin, cin * tin.grad_x)
    g = g + param_grad_weighted(params, tin, cin * (pw.w * tin.value - pw.f))
    if prob.bc == "neumann":
        bweights = -cbd * pw.g
    else:
        bweights = cbd * (tbd.value - pw.g)
    g = g + param_grad_weighted(params, tbd, bweights)
    return br, g


def loss_gradient(params: NetParams, prob: ProblemSpec, samples: SampleSet) -> ParamGrad:
    return loss_and_gradient(params, prob, samples)[1]


# ---------------------------------------------------------------------------
# energy excess

@dataclass(frozen=True)
class EnergyExcess:
    """lhs = L(u) - L(u*) and rhs = quadratic energy of v = u - u*.

    cross is the first variation of the loss at u* in direction v, computed on
    the same samples as lhs. lhs == rhs + cross holds sample by sample; cross
    vanishes only in expectation (weak form), so lhs and rhs coincide only up
    to Monte Carlo error.
    """

    lhs: float
    rhs: float
    cross: float
    lhs_stderr: float
    rhs_stderr: float


def energy_excess(params: Optional[NetParams], prob: ProblemSpec, eval_samples: SampleSet,
                  rhs_samples: Optional[SampleSet] = None,
                  candidate: Optional[tuple[Callable, Callable]] = None) -> EnergyExcess:
    """Compare the loss excess of the network over u* with the energy of the error.

    By default both sides use eval_samples. Passing rhs_samples evaluates the
    energy on an independent set. candidate=(u, grad_u) replaces the network.
    """
    if prob.exact is None:
        raise ValueError("problem has no exact solution attached")
    ex = prob.exact
    if candidate is None:
        def u(X):
            return evaluate(params, X).value

        def du(X):
            return evaluate(params, X).grad_x
    else:
        u, du = candidate
    binv = 0.0 if prob.bc == "neumann" else 1.0 / prob.beta
    bfac_lin = 1.0 if prob.bc == "neumann" else binv

    def loss_terms(S: SampleSet, U, dU, Ub):
        w = prob.w(S.interior)
        f = prob.f(S.interior)
        g = prob.g(S.boundary, S.normals)
        inner = 0.5 * np.sum(dU * dU, axis=1) + 0.5 * w * U * U - f * U
        outer = 0.5 * binv * Ub * Ub - bfac_lin * g * Ub
        return inner, outer

    S = eval_samples
    _check_samples(S)
    un, dun, ubn = u(S.interior), du(S.interior), u(S.boundary)
    us, dus, ubs = ex.u(S.interior), ex.gradient(S.interior), ex.u(S.boundary)
    i1, o1 = loss_terms(S, un, dun, ubn)
    i0, o0 = loss_terms(S, us, dus, ubs)
    di, do = i1 - i0, o1 - o0
    lhs = S.vol * np.sum(di) / S.n + S.area * np.sum(do) / S.m
    lhs_se = np.hypot(_stderr(di, S.vol), _stderr(do, S.area))

    w = prob.w(S.interior)
    f = prob.f(S.interior)
    g = prob.g(S.boundary, S.normals)
    v, dv, vb = un - us, dun - dus, ubn - ubs
    ci = np.sum(dus * dv, axis=1) + w * us * v - f * v
    cb = binv * ubs * vb - bfac_lin * g * vb
    cross = S.vol * np.sum(ci) / S.n + S.area * np.sum(cb) / S.m

    R = rhs_samples if rhs_samples is not None else S
    if rhs_samples is not None:
        _check_samples(R)
        v = u(R.interior) - ex.u(R.interior)
        dv = du(R.interior) - ex.gradient(R.interior)
        vb = u(R.boundary) - ex.u(R.boundary)
        w = prob.w(R.interior)
    ri = 0.5 * np.sum(dv * dv, axis=1) + 0.5 * w * v * v
    rb = 0.5 * binv * vb * vb
    rhs = R.vol * np.sum(ri) / R.n + R.area * np.sum(rb) / R.m
    rhs_se = np.hypot(_stderr(ri, R.vol), _stderr(rb, R.area))
    return EnergyExcess(float(lhs), float(rhs), float(cross), float(lhs_se), float(rhs_se))
