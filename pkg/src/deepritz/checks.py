"""Finite-difference, projection and convexity property suites.

The finite-difference oracles only ever call forward evaluations (forward,
grad_x, discrete_loss), never the closed-form parameter gradients they check.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import sympy as sp

from . import network
from .loss import discrete_loss, loss_and_gradient
from .network import NetParams, evaluate, grad_x, random_params
from .optimizer import ProjectionSpec, constraint_slack, project, project_l1_ball
from .problems import Domain, ExactSolution, draw_samples, manufacture

FD_STEP = 1e-5


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(b), np.linalg.norm(a), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


def fd_gradient(fun, params: NetParams, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function of the flattened parameters."""
    flat = params.flatten()
    out = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        plus = fun(NetParams.unflatten(flat + e, params.A, params.dims))
        minus = fun(NetParams.unflatten(flat - e, params.A, params.dims))
        out[i] = (plus - minus) / (2 * h)
    return out


def fd_grad_x(params: NetParams, x, h: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (network.forward(params, x + e) - network.forward(params, x - e)) / (2 * h)
    return out


def _without_second_derivatives(tr):
    return dataclasses.replace(tr, t1=np.zeros_like(tr.t1), t2=np.zeros_like(tr.t2))


def _analytic_loss_grad(params, prob, samples, corrupt: bool):
    if not corrupt:
        return loss_and_gradient(params, prob, samples)[1]

    def broken(p, X):
        return _without_second_derivatives(evaluate(p, X))
    return loss_and_gradient(params, prob, samples, evaluator=broken)[1]


def _random_problem(rng, d: int):
    bc = ["robin", "neumann", "dirichlet"][rng.integers(3)]
    xs = sp.symbols(f"x1:{d + 1}")
    a = [float(v) for v in rng.uniform(0.5, 2.0, d)]
    expr = sp.Add(*[sp.sin(ai * x) for ai, x in zip(a, xs)]) + sp.Mul(*xs)
    ex = ExactSolution.from_sympy(expr, d)
    c = float(rng.uniform(0.5, 2.0))
    dom = Domain("hypercube" if rng.random() < 0.7 or d == 1 else "ball", d)
    if bc == "dirichlet":
        prob = manufacture(dom, ex, lambda X: c + np.zeros(len(np.atleast_2d(X))), "robin",
                           float(rng.uniform(0.1, 1.0)))
        return dataclasses.replace(prob, bc="dirichlet", g=lambda Y, nrm: np.zeros(len(Y)))
    beta = float(rng.uniform(0.2, 2.0)) if bc == "robin" else None
    return manufacture(dom, ex, lambda X: c + 0.3 * np.atleast_2d(X)[:, 0], bc, beta)


@dataclass
class GradCheckReport:
    configs: list = field(default_factory=list)
    max_error: dict = field(default_factory=dict)
    tolerance: float = 1e-5

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_error.values())

    def record(self, name: str, err: float, **info) -> None:
        self.max_error[name] = max(self.max_error.get(name, 0.0), err)
        self.configs.append({"check": name, "error": err, **info})


def gradient_suite(n_configs: int = 20, seed: int = 0, tolerance: float = 1e-5,
                   corrupt: bool = False) -> GradCheckReport:
    """Loss, spatial and mixed spatial-parameter gradients against central differences.

    Per-block maxima are reported under keys like "loss/W2".
    """
    rng = np.random.default_rng(seed)
    rep = GradCheckReport(tolerance=tolerance)
    for c in range(n_configs):
        d = int(rng.choice([1, 2, 3]))
        A = int(rng.choice([1, 2, 4]))
        dims = (d, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        params = random_params(rng, A, dims, scale=float(rng.uniform(0.3, 1.5)))
        prob = _random_problem(rng, d)
        samples = draw_samples(prob.domain, int(rng.integers(3, 12)), int(rng.integers(2, 8)),
                               int(rng.integers(2**31)))
        info = {"config": c, "d": d, "A": A, "m1": dims[1], "m2": dims[2], "bc": prob.bc}

        analytic = _analytic_loss_grad(params, prob, samples, corrupt)
        oracle = fd_gradient(lambda p: discrete_loss(p, prob, samples).total, params)
        rep.record("loss", relative_error(analytic.flatten(), oracle), **info)
        _per_block(rep, "loss", analytic, oracle, params)

        x = samples.interior[0]
        rep.record("grad_x", relative_error(grad_x(params, x), fd_grad_x(params, x)), **info)
        g = network.grad_params(params, x)
        rep.record("params", relative_error(
            g.flatten(), fd_gradient(lambda p: network.forward(p, x), params)), **info)
        for j in range(1, d + 1):
            if corrupt:
                tr = _without_second_derivatives(evaluate(params, x[None, :]))
                E = np.zeros((1, d))
                E[0, j - 1] = 1.0
                gj = network.spatial_param_grad_weighted(params, tr, E)
            else:
                gj = network.grad_params_of_spatial(params, x, j)
            oracle_j = fd_gradient(lambda p: grad_x(p, x)[j - 1], params)
            rep.record("mixed", relative_error(gj.flatten(), oracle_j), axis=j, **info)
    return rep


def _per_block(rep, prefix, analytic, oracle_flat, params) -> None:
    oracle = network.ParamGrad.unflatten(oracle_flat, params.A, params.dims)
    for name in network.BLOCKS:
        a, b = getattr(analytic, name), getattr(oracle, name)
        if np.linalg.norm(b) > 1e-8 or np.linalg.norm(a) > 1e-8:
            err = relative_error(a, b)
        else:
            err = 0.0
        rep.max_error[f"{prefix}/{name}"] = max(rep.max_error.get(f"{prefix}/{name}", 0.0), err)


# ---------------------------------------------------------------------------
# projection

def brute_force_l1_projection(y, radius: float) -> np.ndarray:
    """Exact projection onto the l1 ball by enumerating sign patterns.

    On a face with support S and signs s the projection is y_S - theta s with
    theta = (s . y_S - radius) / |S|; the nearest sign-consistent candidate wins.
    """
    y = np.asarray(y, dtype=float)
    if np.abs(y).sum() <= radius:
        return y.copy()
    best, best_dist = np.zeros_like(y), np.linalg.norm(y)
    for signs in product((-1, 0, 1), repeat=y.size):
        s = np.array(signs, dtype=float)
        support = s != 0
        k = support.sum()
        if k == 0:
            continue
        theta = (s[support] @ y[support] - radius) / k
        x = np.zeros_like(y)
        x[support] = y[support] - theta * s[support]
        if np.any(x[support] * s[support] < 0):
            continue
        dist = np.linalg.norm(x - y)
        if dist < best_dist:
            best, best_dist = x, dist
    return best


def _random_spec(rng, A, dims, radius, budget):
    centers = random_params(rng, A, dims)
    return ProjectionSpec(centers, radius, budget)


@dataclass
class ProjectionReport:
    idempotence: float = 0.0
    min_slack: float = np.inf
    expansion: float = -np.inf
    l1_oracle: float = 0.0
    members_unchanged: bool = True

    @property
    def passed(self) -> bool:
        return (self.idempotence <= 1e-12 and self.min_slack >= -1e-12
                and self.expansion <= 1e-12 and self.l1_oracle <= 1e-9
                and self.members_unchanged)


def projection_suite(pairs: int = 1000, seed: int = 0, oracle_cases: int = 300) -> ProjectionReport:
    rng = np.random.default_rng(seed)
    rep = ProjectionReport()
    for _ in range(pairs):
        A = int(rng.integers(1, 4))
        dims = (int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        spec = _random_spec(rng, A, dims, float(rng.uniform(0, 2)), float(rng.uniform(0, 3)))
        scale = float(rng.uniform(0.1, 4))
        z = spec.inner_centers + random_params(rng, A, dims, scale)
        z2 = spec.inner_centers + random_params(rng, A, dims, scale)
        pz, pz2 = project(z, spec), project(z2, spec)
        rep.idempotence = max(rep.idempotence, (project(pz, spec) - pz).norm())
        rep.min_slack = min(rep.min_slack, constraint_slack(pz, spec) / max(1.0, spec.outer_budget))
        rep.expansion = max(rep.expansion, (pz - pz2).norm() - (z - z2).norm())
        if not project(pz, spec).equal(pz) and constraint_slack(pz, spec) >= 0:
            rep.members_unchanged = False
    for _ in range(oracle_cases):
        size = int(rng.integers(1, 7))
        y = rng.standard_normal(size) * rng.uniform(0.1, 3)
        for radius in (0.0, 0.1, 0.5, 1.0, 2.0):
            rep.l1_oracle = max(rep.l1_oracle, float(np.max(np.abs(
                project_l1_ball(y, radius) - brute_force_l1_projection(y, radius)))))
    return rep


# ---------------------------------------------------------------------------
# outer-layer convexity

def convexity_probe(params: NetParams, prob, samples, directions: int = 1000, h: float = 1e-3,
                    seed: int = 0) -> float:
    """Smallest second difference of the loss along random outer-layer directions."""
    rng = np.random.default_rng(seed)
    base = discrete_loss(params, prob, samples).total
    worst = np.inf
    for _ in range(directions):
        dW3 = rng.standard_normal(params.W3.shape)
        db3 = rng.standard_normal(params.b3.shape)
        vals = []
        for sgn in (1.0, -1.0):
            p = params.with_outer(params.W3 + sgn * h * dW3, params.b3 + sgn * h * db3)
            vals.append(discrete_loss(p, prob, samples).total)
        worst = min(worst, vals[0] - 2.0 * base + vals[1])
    return float(worst)
