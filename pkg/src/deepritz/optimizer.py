"""Projected gradient descent on a product of norm balls."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from math import log10
from typing import Optional

import numpy as np

from .loss import loss_and_gradient
from .network import NetParams
from .problems import ProblemSpec, SampleSet

log = logging.getLogger(__name__)

INNER_BLOCKS = ("W1", "b1", "W2", "b2")
DESCENT_TOL = 1e-10
INFEASIBLE_LOG10_A = 12.0


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    T: int
    A: int = 16
    init_bound: float = 1.0
    seed: int = 0
    mode: str = "practical"
    # halve eta until this many trial steps are nonincreasing (practical mode)
    guard_trials: int = 20
    max_halvings: int = 40

    def __post_init__(self):
        if self.mode not in ("practical", "theory-report"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (self.eta >= 0 and np.isfinite(self.eta)):
            raise ValueError("eta must be a finite nonnegative number")
        if self.mode == "theory-report":
            if self.eta <= 0:
                raise ValueError("theory-report mode needs eta > 0")
            object.__setattr__(self, "T", int(round(1.0 / self.eta)))
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.A < 1:
            raise ValueError("A must be at least 1")


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """Frobenius balls of radius inner_radius around the inner blocks of
    inner_centers, and an l1 ball of radius outer_budget for (W3, b3)."""

    inner_centers: NetParams
    inner_radius: float
    outer_budget: float

    def __post_init__(self):
        if self.inner_radius < 0 or self.outer_budget < 0:
            raise ValueError("radius and budget must be nonnegative")

    def check_shape(self, params: NetParams) -> None:
        if params.A != self.inner_centers.A or params.dims != self.inner_centers.dims:
            raise ValueError("projection centres do not match the parameter shapes")


def init_params(cfg: TrainConfig, dims) -> NetParams:
    """Outer layer zero, inner entries i.i.d. uniform on [-init_bound, init_bound]."""
    if not cfg.init_bound > 0:
        raise ValueError("init_bound must be positive")
    d, m1, m2 = dims
    rng = np.random.default_rng(cfg.seed)
    b = cfg.init_bound
    A = cfg.A
    return NetParams(
        W1=rng.uniform(-b, b, (A, m1, d)),
        b1=rng.uniform(-b, b, (A, m1)),
        W2=rng.uniform(-b, b, (A, m2, m1)),
        b2=rng.uniform(-b, b, (A, m2)),
        W3=np.zeros((A, m2)),
        b3=np.zeros(A),
    )


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto {x : ||x||_1 <= radius} by sort-and-threshold."""
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius == 0:
        return np.zeros_like(v)
    u = np.sort(a.ravel())[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    hits = np.nonzero(u * k > css - radius)[0]
    # index 0 always qualifies in exact arithmetic; rounding can lose it for tiny radii
    rho = hits[-1] if hits.size else 0
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def project_frobenius_ball(v, center, radius: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    diff = v - center
    dist = np.sqrt(np.sum(diff * diff))
    if dist <= radius:
        return v
    return center + (radius / dist) * diff


def outer_vector(params: NetParams) -> np.ndarray:
    return np.concatenate([params.W3.ravel(), params.b3])


def project(params: NetParams, spec: ProjectionSpec) -> NetParams:
    """Euclidean projection onto the constraint set, computed block by block.

    Members of the set are returned with every block untouched.
    """
    spec.check_shape(params)
    blocks = {}
    for name in INNER_BLOCKS:
        vals = getattr(params, name)
        centers = getattr(spec.inner_centers, name)
        blocks[name] = np.stack([
            project_frobenius_ball(vals[s], centers[s], spec.inner_radius)
            for s in range(params.A)
        ])
    outer = outer_vector(params)
    if np.abs(outer).sum() <= spec.outer_budget:
        W3, b3 = params.W3, params.b3
    else:
        po = project_l1_ball(outer, spec.outer_budget)
        W3 = po[:-params.A].reshape(params.W3.shape)
        b3 = po[-params.A:]
    return NetParams(W3=W3, b3=b3, **blocks)


def constraint_slack(params: NetParams, spec: ProjectionSpec) -> float:
    """Smallest slack over all ball and budget constraints (negative = violated)."""
    slack = spec.outer_budget - np.abs(outer_vector(params)).sum()
    for name in INNER_BLOCKS:
        diff = getattr(params, name) - getattr(spec.inner_centers, name)
        norms = np.sqrt(np.sum(diff.reshape(params.A, -1) ** 2, axis=1))
        slack = min(slack, float(np.min(spec.inner_radius - norms)))
    return float(slack)


def _active_flags(params: NetParams, spec: ProjectionSpec, tol: float = 1e-12) -> dict:
    flags = {}
    for name in INNER_BLOCKS:
        diff = getattr(params, name) - getattr(spec.inner_centers, name)
        norms = np.sqrt(np.sum(diff.reshape(params.A, -1) ** 2, axis=1))
        flags[name] = bool(np.any(norms >= spec.inner_radius - tol))
    flags["outer"] = bool(np.abs(outer_vector(params)).sum() >= spec.outer_budget - tol)
    return flags


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainTrace:
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    active: list = field(default_factory=list)
    guard_flag: list = field(default_factory=list)
    eta: float = 0.0
    aborted: Optional[str] = None

    def __len__(self) -> int:
        return len(self.loss)

    @property
    def guard_violations(self) -> int:
        return int(sum(self.guard_flag))

    def is_monotone(self, tol: float = DESCENT_TOL) -> bool:
        return bool(np.all(np.diff(self.loss) <= tol))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schema=1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "loss", "grad_norm", "step_norm", "guard_flag"])
        for i in range(len(self.loss)):
            w.writerow([i, repr(self.loss[i]), repr(self.grad_norm[i]),
                        repr(self.step_norm[i]), int(self.guard_flag[i])])
        return buf.getvalue()


class NonFiniteError(RuntimeError):
    def __init__(self, message, params, trace):
        super().__init__(message)
        self.params = params
        self.trace = trace


def pgd_step(params, prob, samples, eta, spec):
    """One projected step; returns (new params, loss and gradient at params)."""
    br, g = loss_and_gradient(params, prob, samples)
    new = project(params - eta * g, spec)
    return new, br, g


def train(params0: NetParams, prob: ProblemSpec, samples: SampleSet, cfg: TrainConfig,
          spec: ProjectionSpec, eta: Optional[float] = None,
          raise_on_nonfinite: bool = True) -> tuple[NetParams, TrainTrace]:
    """Run T full-batch projected gradient steps from proj(params0).

    The trace has T + 1 entries; entry t describes W_t. guard_flag[t] marks a
    loss increase above DESCENT_TOL on the step into W_t.
    """
    eta = cfg.eta if eta is None else eta
    params = project(params0, spec)
    trace = TrainTrace(eta=eta)
    br, g = loss_and_gradient(params, prob, samples)
    prev_step = 0.0
    for t in range(cfg.T + 1):
        loss = br.total
        gnorm = g.norm()
        if not (np.isfinite(loss) and np.isfinite(gnorm)):
            trace.aborted = f"non-finite loss or gradient at iteration {t}"
            if raise_on_nonfinite:
                raise NonFiniteError(trace.aborted, params, trace)
            break
        trace.loss.append(loss)
        trace.grad_norm.append(gnorm)
        trace.step_norm.append(prev_step)
        trace.active.append(_active_flags(params, spec))
        trace.guard_flag.append(t > 0 and loss > trace.loss[t - 1] + DESCENT_TOL)
        if t == cfg.T:
            break
        new = project(params - eta * g, spec)
        # nan slack (non-finite iterate) is caught as a non-finite loss next round
        assert not constraint_slack(new, spec) < -1e-12 * max(1.0, spec.outer_budget)
        prev_step = (new - params).norm()
        params = new
        br, g = loss_and_gradient(params, prob, samples)
    return params, trace


def find_safe_step(params0: NetParams, prob: ProblemSpec, samples: SampleSet,
                   cfg: TrainConfig, spec: ProjectionSpec) -> float:
    """Halve eta from cfg.eta until guard_trials steps are nonincreasing."""
    eta = cfg.eta
    trial = replace(cfg, T=cfg.guard_trials, mode="practical")
    for _ in range(cfg.max_halvings):
        if eta == 0:
            return eta
        try:
            _, tr = train(params0, prob, samples, trial, spec, eta=eta)
            if tr.is_monotone():
                log.info("safe step %.3g", eta)
                return eta
        except NonFiniteError:
            pass
        eta *= 0.5
    raise RuntimeError(f"no monotone step found after {cfg.max_halvings} halvings")


def train_guarded(params0, prob, samples, cfg, spec, raise_on_nonfinite: bool = True):
    """Find a safe step (practical mode) and train with it."""
    eta = cfg.eta
    if cfg.mode == "practical" and eta > 0:
        eta = find_safe_step(params0, prob, samples, cfg, spec)
    return train(params0, prob, samples, cfg, spec, eta=eta,
                 raise_on_nonfinite=raise_on_nonfinite)


# ---------------------------------------------------------------------------
# prescriptions of the convergence theorem (reported, never instantiated)

@dataclass(frozen=True)
class HyperparamReport:
    n: int
    d: int
    A_exp: float
    B_inn_exp: float
    B_out_exp: float
    inner_radius_exp: float
    eta_exp: float
    rate_exp: float
    dirichlet_rate_exp: float
    log10_A: float
    log10_B_inn: float
    log10_B_out: float
    log10_inner_radius: float
    log10_eta: float
    log10_T: float
    infeasible: bool

    def to_record(self) -> dict:
        return dict(self.__dict__)


def theoretical_hyperparams(n: int, d: int) -> HyperparamReport:
    """Exponents of n prescribed for A, B_inn, B_out, the inner radius, eta and the rate.

    Unknown constants C(d, coe, Omega) are set to 1 for the log-magnitudes.
    rate_exp is positive: the error bound scales as n ** (-rate_exp).
    """
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    d3 = d**3
    den = 288 * d3 + 4
    A_exp = 415 * d**4 * (d + 3) * 5 ** (d + 2) / den
    B_inn_exp = 10 * d3 / (144 * d3 + 2)
    B_out_exp = 11 * d3 / (144 * d3 + 2)
    radius_exp = -83 * d3 / den
    eta_exp = -103 * d3 / (144 * d3 + 2) - A_exp
    ln = log10(n)
    return HyperparamReport(
        n=n, d=d, A_exp=A_exp, B_inn_exp=B_inn_exp, B_out_exp=B_out_exp,
        inner_radius_exp=radius_exp, eta_exp=eta_exp,
        rate_exp=1.0 / den, dirichlet_rate_exp=1.0 / (576 * d3 + 8),
        log10_A=A_exp * ln, log10_B_inn=B_inn_exp * ln, log10_B_out=B_out_exp * ln,
        log10_inner_radius=radius_exp * ln + log10(0.5), log10_eta=eta_exp * ln,
        log10_T=-eta_exp * ln,
        infeasible=A_exp * ln > INFEASIBLE_LOG10_A,
    )
