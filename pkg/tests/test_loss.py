import json

import numpy as np
import pytest
import sympy as sp

import oracle
from deepritz import checks
from deepritz.loss import (TERM_NAMES, discrete_loss, discrete_loss_neumann, discrete_loss_robin,
                           energy_excess, loss_and_gradient, loss_gradient)
from deepritz.network import NetParams, random_params
from deepritz.problems import (Domain, ExactSolution, draw_samples, manufacture,
                               robin_1d_problem)


def cosine_problem(bc, d=2, kind="hypercube"):
    xs = sp.symbols(f"x1:{d + 1}")
    ex = ExactSolution.from_sympy(sp.Mul(*[sp.cos(x) for x in xs]) + xs[0], d)
    w = lambda X: 1.0 + np.atleast_2d(X)[:, 0] ** 2
    return manufacture(Domain(kind, d), ex, w, bc, 0.7 if bc == "robin" else None)


@pytest.mark.parametrize("bc,kind", [("robin", "hypercube"), ("neumann", "hypercube"),
                                     ("robin", "ball")])
def test_loss_matches_pointwise_oracle(rng, bc, kind):
    prob = cosine_problem(bc, kind=kind)
    p = random_params(rng, 2, (2, 3, 2))
    S = draw_samples(prob.domain, 9, 5, 1)
    subnets = [tuple(np.asarray(b).tolist() for b in s) for s in p.subnets]
    expected = oracle.ritz_loss(
        subnets, bc, prob.beta,
        lambda x: float(prob.w(np.array([x]))[0]), lambda x: float(prob.f(np.array([x]))[0]),
        lambda y, n: float(prob.g(np.array([y]), np.array([n]))[0]),
        S.interior.tolist(), S.boundary.tolist(), S.normals.tolist(), S.vol, S.area)
    assert discrete_loss(p, prob, S).total == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_zero_network_has_zero_loss():
    prob = robin_1d_problem()
    S = draw_samples(prob.domain, 20, 20, 0)
    br = discrete_loss(NetParams.zeros(3, (1, 5, 3)), prob, S)
    assert br.total == 0.0
    assert all(t == 0.0 for t in br.terms)


def test_breakdown_terms_sum(rng):
    prob = cosine_problem("robin")
    br = discrete_loss(random_params(rng, 2, (2, 2, 2)), prob, draw_samples(prob.domain, 30, 10, 2))
    assert br.total == pytest.approx(sum(br.terms))
    rec = json.loads(br.to_json())
    assert set(rec) == set(TERM_NAMES) | {"total", "stderr"}
    assert br.grad_energy >= 0 and br.mass >= 0 and br.bdry_mass >= 0
    assert br.stderr > 0


def test_neumann_has_no_boundary_mass(rng):
    prob = cosine_problem("neumann")
    br = discrete_loss(random_params(rng, 1, (2, 2, 2)), prob, draw_samples(prob.domain, 10, 10, 3))
    assert br.bdry_mass == 0.0


def test_kind_specific_entry_points(rng):
    p = random_params(rng, 1, (2, 2, 2))
    S = draw_samples(Domain("hypercube", 2), 5, 5, 0)
    with pytest.raises(ValueError):
        discrete_loss_neumann(p, cosine_problem("robin"), S)
    with pytest.raises(ValueError):
        discrete_loss_robin(p, cosine_problem("neumann"), S)


def test_dirichlet_is_penalised_robin(rng):
    rob = robin_1d_problem(beta=0.05)
    dirich = robin_1d_problem(beta=0.05, bc="dirichlet")
    p = random_params(rng, 2, (1, 3, 2))
    S = draw_samples(rob.domain, 15, 8, 4)
    assert discrete_loss(p, rob, S).total == discrete_loss(p, dirich, S).total


@pytest.mark.parametrize("bc", ["robin", "neumann"])
def test_gradient_against_fd(rng, bc):
    prob = cosine_problem(bc)
    p = random_params(rng, 2, (2, 3, 2), scale=0.8)
    S = draw_samples(prob.domain, 8, 6, 5)
    g = loss_gradient(p, prob, S)
    fd = checks.fd_gradient(lambda q: discrete_loss(q, prob, S).total, p)
    assert checks.relative_error(g.flatten(), fd) < 1e-7
    br, g2 = loss_and_gradient(p, prob, S)
    assert br.total == discrete_loss(p, prob, S).total
    assert g2.equal(g)


def test_empty_samples_rejected(rng):
    prob = robin_1d_problem()
    S = draw_samples(prob.domain, 4, 4, 0)
    empty = type(S)(S.interior, S.boundary[:0], S.normals[:0], S.vol, S.area)
    with pytest.raises(ValueError):
        discrete_loss(random_params(rng, 1, (1, 1, 1)), prob, empty)


@pytest.mark.parametrize("bc", ["robin", "neumann"])
def test_energy_identity_with_cross_term(rng, bc):
    prob = cosine_problem(bc)
    p = random_params(rng, 2, (2, 3, 3), scale=0.5)
    ee = energy_excess(p, prob, draw_samples(prob.domain, 200, 100, 6))
    assert ee.lhs == pytest.approx(ee.rhs + ee.cross, abs=1e-10)
    assert ee.rhs > 0


def test_energy_excess_lhs_is_loss_difference(rng):
    prob = robin_1d_problem()
    p = random_params(rng, 2, (1, 3, 2))
    S = draw_samples(prob.domain, 50, 50, 7)
    ee = energy_excess(p, prob, S)
    ex = prob.exact
    ee_star = energy_excess(None, prob, S, candidate=(ex.u, ex.gradient))
    assert (ee_star.lhs, ee_star.rhs, ee_star.cross) == (0.0, 0.0, 0.0)
    # L(u*) written out directly
    w, f = prob.w(S.interior), prob.f(S.interior)
    u, du = ex.u(S.interior), ex.gradient(S.interior)
    ub = ex.u(S.boundary)
    L_star = (np.mean(0.5 * du[:, 0] ** 2 + 0.5 * w * u * u - f * u)
              + S.area * np.mean(0.5 * ub * ub) / prob.beta)
    assert ee.lhs == pytest.approx(discrete_loss(p, prob, S).total - L_star, abs=1e-12)


def test_energy_excess_needs_exact(rng):
    prob = robin_1d_problem()
    bare = type(prob)(prob.bc, prob.domain, prob.w, prob.f, prob.g, prob.beta, None)
    with pytest.raises(ValueError):
        energy_excess(random_params(rng, 1, (1, 1, 1)), bare, draw_samples(prob.domain, 3, 3, 0))


def test_energy_excess_independent_samples_agree(rng):
    prob = cosine_problem("robin")
    p = random_params(rng, 2, (2, 3, 3), scale=0.5)
    ee = energy_excess(p, prob, draw_samples(prob.domain, 4000, 4000, 8),
                       rhs_samples=draw_samples(prob.domain, 4000, 4000, 9))
    assert abs(ee.lhs - ee.rhs) <= 3 * np.hypot(ee.lhs_stderr, ee.rhs_stderr)


def test_gradient_additive_over_samples(rng):
    # the loss is a weighted sum over points, so per-point gradients add up
    prob = cosine_problem("robin")
    p = random_params(rng, 2, (2, 3, 2))
    S = draw_samples(prob.domain, 40, 20, 11)
    full = loss_gradient(p, prob, S).flatten()
    parts = np.zeros_like(full)
    for i in range(S.n):
        # one interior point and no boundary contribution (area 0)
        one = type(S)(S.interior[i:i + 1], S.boundary[:1], S.normals[:1], S.vol / S.n, 0.0)
        parts += loss_gradient(p, prob, one).flatten()
    for k in range(S.m):
        one = type(S)(S.interior[:1], S.boundary[k:k + 1], S.normals[k:k + 1], 0.0, S.area / S.m)
        parts += loss_gradient(p, prob, one).flatten()
    np.testing.assert_allclose(parts, full, atol=1e-12)


def test_coercivity_probe(rng):
    prob = cosine_problem("robin")
    for scale in (0.5, 1.0, 2.0):
        p = random_params(rng, 3, (2, 3, 3), scale=scale)
        ee = energy_excess(p, prob, draw_samples(prob.domain, 20000, 20000, 12))
        assert ee.lhs >= 0
        assert ee.rhs >= 0
