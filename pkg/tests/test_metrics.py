import json
import math

import numpy as np
import pytest
import sympy as sp

from deepritz.metrics import (TANH_SECOND_SUP, activation_constants, class_norms, complexity_bounds,
                              empirical_rate, generalization_gap, h1_error_at, mc_h1_error)
from deepritz.network import NetParams, evaluate, random_params
from deepritz.problems import Domain, ExactSolution, draw_samples, robin_1d_problem


def linear_exact(d):
    xs = sp.symbols(f"x1:{d + 1}")
    return ExactSolution.from_sympy(xs[0], d)


def test_h1_of_zero_network_is_norm_of_exact():
    # u = x1 on the unit square: ||u||^2 = 1/3, |grad u|^2 = 1
    dom = Domain("hypercube", 2)
    rep = mc_h1_error(NetParams.zeros(2, (2, 3, 3)), linear_exact(2), dom, 20000, 0)
    assert rep.h1_semi == pytest.approx(1.0, abs=1e-12)
    assert abs(rep.h1 - math.sqrt(4 / 3)) < 4 * rep.mc_stderr
    assert rep.mc_stderr > 0 and rep.n_eval == 20000
    assert json.loads(rep.to_json())["n_eval"] == 20000


def test_h1_error_at_deterministic():
    dom = Domain("hypercube", 1)
    ex = linear_exact(1)
    X = np.linspace(0.05, 0.95, 10)[:, None]
    # prediction offset by 0.5 with the exact slope: l2 = 0.5, semi = 0
    rep = h1_error_at(X[:, 0] + 0.5, np.ones((10, 1)), ex, X, dom)
    assert rep.l2 == pytest.approx(0.5)
    assert rep.h1_semi == 0.0
    assert rep.h1 == pytest.approx(0.5)
    assert rep.mc_stderr == pytest.approx(0.0, abs=1e-15)


def test_ball_volume_weighting():
    dom = Domain("ball", 2)
    X = np.full((4, 2), 0.5)
    rep = h1_error_at(np.ones(4), np.zeros((4, 2)), ExactSolution.from_sympy(sp.Integer(0), 2), X, dom)
    assert rep.l2 == pytest.approx(math.sqrt(math.pi / 4))


def test_mc_error_validation():
    with pytest.raises(ValueError):
        mc_h1_error(NetParams.zeros(1, (1, 1, 1)), linear_exact(1), Domain("hypercube", 1), 50, 0)
    with pytest.raises(ValueError):
        mc_h1_error(NetParams.zeros(1, (1, 1, 1)), None, Domain("hypercube", 1), 500, 0)


def test_generalization_gap(rng):
    prob = robin_1d_problem()
    p = random_params(rng, 2, (1, 3, 2))
    S = draw_samples(prob.domain, 100, 100, 1)
    assert generalization_gap(p, prob, S, S) == 0.0
    assert generalization_gap(p, prob, S, draw_samples(prob.domain, 100, 100, 2)) > 0


def test_activation_constants():
    assert TANH_SECOND_SUP == pytest.approx(4 / (3 * math.sqrt(3)))
    x = np.linspace(-3, 3, 200001)
    t = np.tanh(x)
    assert np.abs(-2 * t * (1 - t * t)).max() == pytest.approx(TANH_SECOND_SUP, rel=1e-9)
    assert activation_constants() == (1.0, 1.0, 1.0)


def test_complexity_bounds_frozen():
    cb = complexity_bounds(5, 3, 1, 2.0, 3.0)
    # hand evaluation with B_sigma = B_sigma' = B_sigma'' = 1
    assert cb.B_F1 == pytest.approx(2 * 9 * 5**1.5 * 2**5 * 9)
    assert cb.B_F1 == pytest.approx(57958.88, abs=0.01)
    assert cb.B_F2 == pytest.approx(724.486, abs=1e-3)
    assert cb.B_F3 == pytest.approx(40.2492, abs=1e-4)
    assert cb.B_F2 == cb.B_F4
    assert cb.B_F3 == cb.B_F5
    with pytest.raises(ValueError):
        complexity_bounds(0, 3, 1, 1.0, 1.0)


def test_class_norms():
    p = NetParams.from_subnets([([[3.0]], [4.0], [[0.0]], [0.0], [1.0], -2.0),
                                ([[1.0]], [0.0], [[0.0]], [0.0], [0.5], 0.0)])
    B_inn, B_out = class_norms(p)
    assert B_inn == 4.0
    assert B_out == 3.5


@pytest.mark.parametrize("seed", range(5))
def test_bounds_dominate_sampled_values(seed):
    rng = np.random.default_rng(seed)
    d, m1, m2 = 2, 4, 3
    p = random_params(rng, 3, (d, m1, m2), scale=0.6)
    B_inn, B_out = class_norms(p)
    # the gradient bound carries one inner factor, so keep B_inn <= m2 sqrt(m1)
    assert B_inn <= m2 * math.sqrt(m1)
    cb = complexity_bounds(m1, m2, d, B_inn, B_out)
    tr = evaluate(p, rng.uniform(0, 1, (2000, d)))
    assert np.abs(tr.value).max() <= cb.value_bound
    assert np.linalg.norm(tr.grad_x, axis=1).max() <= cb.grad_bound


def test_empirical_rate():
    n = np.array([100, 400, 1600])
    assert empirical_rate(zip(n, 3.0 * n**-0.5)) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        empirical_rate([(1, 1), (2, 0.5)])
    with pytest.raises(ValueError):
        empirical_rate([(1, 1), (2, 0), (4, 1)])


def test_constant_solution_against_zero_network():
    dom = Domain("hypercube", 3)
    rep = mc_h1_error(NetParams.zeros(1, (3, 2, 2)), ExactSolution.from_sympy(sp.Integer(1), 3),
                      dom, 500, 0)
    assert (rep.l2, rep.h1_semi, rep.h1) == (1.0, 0.0, 1.0)


def test_network_against_itself(rng):
    p = random_params(rng, 2, (1, 3, 2))
    ex = ExactSolution(lambda X: evaluate(p, X).value, lambda X: evaluate(p, X).grad_x)
    rep = mc_h1_error(p, ex, Domain("hypercube", 1), 300, 1)
    assert rep.h1 == 0.0 and rep.mc_stderr == 0.0


def test_pythagoras(rng):
    p = random_params(rng, 2, (2, 3, 2))
    rep = mc_h1_error(p, linear_exact(2), Domain("ball", 2), 1000, 2)
    assert rep.h1**2 == pytest.approx(rep.l2**2 + rep.h1_semi**2, abs=1e-12)
    assert min(rep.l2, rep.h1_semi, rep.mc_stderr) >= 0


def test_zero_network_has_no_gap():
    prob = robin_1d_problem()
    z = NetParams.zeros(2, (1, 2, 2))
    assert generalization_gap(z, prob, draw_samples(prob.domain, 10, 10, 1),
                              draw_samples(prob.domain, 10, 10, 2)) == 0.0


def test_gap_spread_shrinks_with_eval_size(rng):
    prob = robin_1d_problem()
    p = random_params(rng, 2, (1, 3, 2))
    S = draw_samples(prob.domain, 200, 200, 0)
    spread = []
    for size in (200, 800):
        gaps = [generalization_gap(p, prob, S, draw_samples(prob.domain, size, size, 100 + r))
                for r in range(60)]
        spread.append(np.std(gaps))
    # the eval-set noise halves; ratio allows for Monte Carlo scatter of the spread itself
    assert spread[1] < 0.8 * spread[0]


def test_complexity_bounds_spec_examples():
    assert complexity_bounds(1, 1, 1, 1.0, 1.0).B_F3 == 1.0
    assert complexity_bounds(10, 10, 2, 2.0, 3.0).B_F3 == pytest.approx(189.737, abs=1e-3)


def test_empirical_rate_examples():
    assert empirical_rate([(10, 2.0), (100, 2.0), (1000, 2.0)]) == pytest.approx(0.0, abs=1e-12)
    assert empirical_rate([(10, 1), (100, 0.3), (1000, 0.1)]) == pytest.approx(-0.5, abs=0.02)
    n = np.array([10.0, 100.0, 1000.0, 10000.0])
    assert empirical_rate(zip(n, n**-0.5)) == pytest.approx(-0.5, abs=1e-10)
