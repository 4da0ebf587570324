import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macggm.errors import SolverError
from macggm.estimators import sign_quantize, signs_covariance
from macggm.model import generate_random_model, sample
from macggm.solver import (
    SolverConfig,
    glasso_solve,
    heuristic_lambda,
    kkt_residuals,
    objective,
    theoretical_lambda,
)

from oracles import primal_objective, proximal_gradient_glasso


def _random_spd(rng, d):
    a = rng.standard_normal((d, 2 * d))
    s = a @ a.T / (2 * d)
    return (s + s.T) / 2


def test_objective_identity():
    assert objective(np.eye(4), np.eye(4), 0.7) == pytest.approx(4.0)


def test_objective_scalar_minimum():
    s = 2.5
    vals = {t: objective(np.array([[t]]), np.array([[s]]), 0.3) for t in (0.3, 1 / s, 0.5)}
    assert min(vals, key=vals.get) == 1 / s
    assert vals[1 / s] == pytest.approx(1 - math.log(1 / s))


def test_objective_two_by_two_by_hand():
    theta = np.array([[2.0, -0.5], [-0.5, 1.0]])
    s = np.array([[1.0, 0.3], [0.3, 2.0]])
    lam = 0.2
    by_hand = (2 * 1 + 2 * -0.5 * 0.3 + 1 * 2) - math.log(2 * 1 - 0.25) + lam * 1.0
    assert objective(theta, s, lam) == pytest.approx(by_hand, rel=1e-14)
    assert primal_objective(theta, s, lam) == pytest.approx(by_hand, rel=1e-14)


def test_objective_requires_pd():
    with pytest.raises(SolverError):
        objective(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2), 0.1)


def test_identity_input_diagonal_penalty():
    res = glasso_solve(np.eye(4), SolverConfig(lam=0.1, penalize_diagonal=True))
    assert not res.edges
    np.testing.assert_allclose(res.theta_hat, np.eye(4) / 1.1, atol=1e-10)
    res = glasso_solve(np.eye(4), SolverConfig(lam=0.1))
    np.testing.assert_allclose(res.theta_hat, np.eye(4), atol=1e-10)


def test_large_lambda_empties_graph():
    s = _random_spd(np.random.default_rng(0), 6)
    off = np.abs(s - np.diag(np.diag(s))).max()
    res = glasso_solve(s, SolverConfig(lam=off))
    assert not res.edges
    np.testing.assert_allclose(res.theta_hat, np.diag(1 / np.diag(s)), atol=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_three_dim_matches_primal_oracle(seed):
    s = _random_spd(np.random.default_rng(seed), 3)
    lam = 0.05
    cfg = SolverConfig(lam=lam, duality_tol=1e-10, inner_tol=1e-12, max_sweeps=500)
    res = glasso_solve(s, cfg)
    theta_o, f_o = proximal_gradient_glasso(s, lam)
    assert res.converged
    assert objective(res.theta_hat, s, lam) == pytest.approx(f_o, abs=1e-6)
    assert np.abs(res.theta_hat - theta_o).max() < 1e-4


def _check_solution(s, lam, cfg, res):
    trace = np.array(res.objective_trace)
    assert np.all(np.diff(trace) <= 1e-10 * np.maximum(1, np.abs(trace[:-1])))
    assert np.allclose(res.theta_hat, res.theta_hat.T, atol=1e-12)
    assert np.linalg.eigvalsh(res.theta_hat)[0] > 0
    edge_res, non_excess = kkt_residuals(s, res, lam)
    assert edge_res < 10 * cfg.duality_tol
    assert non_excess < 10 * cfg.duality_tol


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), d=st.integers(2, 8), lam=st.floats(0.01, 0.5))
def test_solutions_are_certified(seed, d, lam):
    s = _random_spd(np.random.default_rng(seed), d)
    cfg = SolverConfig(lam=lam)
    res = glasso_solve(s, cfg)
    assert res.converged
    _check_solution(s, lam, cfg, res)


@pytest.mark.parametrize("seed", range(3))
def test_initialisations_agree(seed):
    m = generate_random_model(10, 0.3, seed=seed)
    s = np.cov(sample(m, 200, seed=seed), rowvar=False, bias=True)
    cfg = SolverConfig(lam=0.1, penalize_diagonal=True, duality_tol=1e-8, inner_tol=1e-10)
    a = glasso_solve(s, cfg, init="sample")
    b = glasso_solve(s, cfg, init="diagonal")
    assert np.abs(a.theta_hat - b.theta_hat).max() < 1e-4


def test_zero_lambda_inverts():
    s = _random_spd(np.random.default_rng(3), 5) + np.eye(5)
    res = glasso_solve(s, SolverConfig(lam=0.0, duality_tol=1e-10, inner_tol=1e-12, max_sweeps=500))
    assert np.abs(res.theta_hat - np.linalg.inv(s)).max() < 1e-4


def test_non_psd_signs_input():
    m = generate_random_model(15, 0.2, seed=4)
    est = signs_covariance(sign_quantize(sample(m, 10, seed=1)))
    assert np.linalg.eigvalsh(est.matrix)[0] < 0
    cfg = SolverConfig(lam=0.3)
    res = glasso_solve(est, cfg)
    assert np.linalg.eigvalsh(res.theta_hat)[0] > 0
    assert res.converged
    _check_solution(est.matrix, 0.3, cfg, res)


def test_input_validation():
    with pytest.raises(SolverError):
        glasso_solve(np.array([[1.0, 0.2], [0.3, 1.0]]), SolverConfig(lam=0.1))
    with pytest.raises(SolverError):
        glasso_solve(np.array([[0.0, 0.0], [0.0, 1.0]]), SolverConfig(lam=0.1))
    with pytest.raises(SolverError):
        glasso_solve(np.eye(2), SolverConfig(lam=0.1), init="warm")
    for bad in ({"lam": -1.0}, {"lam": 0.1, "max_sweeps": 0}, {"lam": 0.1, "duality_tol": 0.0}):
        with pytest.raises(SolverError):
            SolverConfig(**bad)


def test_non_convergence_is_reported():
    s = _random_spd(np.random.default_rng(9), 12)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = glasso_solve(s, SolverConfig(lam=0.01, max_sweeps=1, duality_tol=1e-14))
    assert not res.converged
    assert res.sweeps_used == 1
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_theoretical_lambda_examples():
    eps = 2 / math.e
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lam = theoretical_lambda(1.0, 50, eps)
        assert lam == pytest.approx(0.8 * math.pi)
        assert theoretical_lambda(1.0, 100, eps) == pytest.approx(lam / math.sqrt(2))
        assert theoretical_lambda(0.5, 50, eps) == pytest.approx(2 * lam)


def test_theoretical_lambda_variants_and_regime():
    with pytest.warns(RuntimeWarning):
        theoretical_lambda(1.0, 100, 0.5, d=10)
    c = 12800.0
    lam = theoretical_lambda(0.5, 1000, 0.001, variant="c_based", c=c)
    assert lam == pytest.approx(16 * math.sqrt(2 * c * math.log(8000) / 1000))
    with pytest.raises(ValueError):
        theoretical_lambda(0.5, 1000, 0.001, variant="c_based")
    with pytest.raises(ValueError):
        theoretical_lambda(0.5, 1000, 0.001, variant="other")


def test_heuristic_lambda_examples():
    assert heuristic_lambda(0.1, "signs") == pytest.approx(0.4)
    assert heuristic_lambda(0.1, "original") == pytest.approx(0.1)
    assert heuristic_lambda(0.3, "uncoded") == pytest.approx(0.2)
    with pytest.raises(ValueError):
        heuristic_lambda(0.1, "other")


def test_edges_and_signs_consistent():
    m = generate_random_model(12, 0.25, seed=8)
    s = np.cov(sample(m, 5000, seed=2), rowvar=False, bias=True)
    res = glasso_solve(s, SolverConfig(lam=0.05))
    for (j, k), sign in res.signs.items():
        assert j < k
        assert sign == np.sign(res.theta_hat[j, k])
    assert res.adjacency.sum() == 2 * len(res.edges)
