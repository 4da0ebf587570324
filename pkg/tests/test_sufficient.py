import math

import numpy as np
import pytest

from macggm import sufficient
from macggm.channel import ChannelSpec, build_real_block
from macggm.estimators import agreement_matrix, sign_quantize
from macggm.model import generate_chain_model, generate_star_model, sample
from macggm.pipelines import estimate


def test_class_probabilities_cover_half():
    for leaves, rho in ((1, 0.3), (5, 0.25), (19, 0.25)):
        probs = sufficient._class_probabilities(leaves, rho)
        assert probs.sum() == pytest.approx(0.5, abs=1e-12)


def test_two_node_class_probabilities_match_arcsine():
    rho = 0.4
    p = sufficient._class_probabilities(1, rho)
    # P(hub > 0, leaf > 0) = 1/4 + arcsin(rho) / (2 pi)
    assert p[1] == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-12)


def test_patterns_enumerate_combinations():
    pats = sufficient._patterns(5, 2)
    assert pats.shape == (10, 5)
    assert np.all((pats == 1).sum(axis=1) == 2)
    assert len({tuple(r) for r in pats}) == 10


def test_star_parameters_rejects_non_star():
    with pytest.raises(ValueError):
        sufficient.star_parameters(generate_chain_model(4, 0.3))


@pytest.mark.parametrize("n", [50, 2000])
def test_sign_agreements_match_direct_simulation(n):
    m = generate_star_model(6, 0.3)
    reps = 400
    rng = np.random.default_rng(0)
    fast = np.array([sufficient.star_sign_agreements(m, n, rng) for _ in range(reps)])
    slow = np.array([agreement_matrix(sign_quantize(sample(m, n, seed=s))) for s in range(reps)])
    iu = np.triu_indices(6, 1)
    f, s = fast[:, iu[0], iu[1]], slow[:, iu[0], iu[1]]
    se = np.sqrt(f.var(axis=0) / reps + s.var(axis=0) / reps)
    assert np.all(np.abs(f.mean(axis=0) - s.mean(axis=0)) < 4 * se)
    ratio = f.var(axis=0) / s.var(axis=0)
    assert np.all((ratio > 0.7) & (ratio < 1.4))
    # leaf-leaf agreements are correlated through the hub in both samplers
    cf = np.corrcoef(fast[:, 1, 2], fast[:, 1, 3])[0, 1]
    cs = np.corrcoef(slow[:, 1, 2], slow[:, 1, 3])[0, 1]
    assert abs(cf - cs) < 0.2


def test_wishart_moment_moments():
    m = generate_chain_model(3, 0.5)
    n, reps = 500, 3000
    rng = np.random.default_rng(1)
    draws = np.array([sufficient.wishart_moment(m.covariance, n, rng) for _ in range(reps)])
    q = m.covariance
    np.testing.assert_allclose(draws.mean(axis=0), q, atol=4 * math.sqrt(2 / (n * reps)))
    # n * Var(S_jk) = Q_jj Q_kk + Q_jk^2
    nvar = n * draws.var(axis=0)
    expected = np.outer(np.diag(q), np.diag(q)) + q ** 2
    np.testing.assert_allclose(nvar, expected, rtol=0.1)


def test_uncoded_sufficient_matches_pipeline():
    m = generate_star_model(4, 0.3)
    spec = ChannelSpec.rayleigh(4, 3.0, seed=2)
    chan = build_real_block(spec)
    n, reps = 1000, 400
    rng = np.random.default_rng(3)
    fast = np.array([sufficient.uncoded_estimate(m, n, spec, rng, chan=chan).matrix
                     for _ in range(reps)])
    slow = np.array([estimate("uncoded", sample(m, n, seed=s), spec, noise_seed=s + 10 ** 5,
                              chan=chan).matrix for s in range(reps)])
    se = np.sqrt(fast.var(axis=0) / reps + slow.var(axis=0) / reps)
    assert np.all(np.abs(fast.mean(axis=0) - slow.mean(axis=0)) < 4 * se)
    ratio = fast.var(axis=0) / slow.var(axis=0)
    assert np.all((ratio > 0.7) & (ratio < 1.4))


def test_huge_sample_sizes():
    m = generate_star_model(20, 0.25)
    rng = np.random.default_rng(4)
    sig = sufficient.signs_estimate(m, 10 ** 15, rng)
    assert np.abs(sig.matrix - m.covariance).max() < 1e-5
    orig = sufficient.original_estimate(m, 1e15, rng)
    assert np.abs(orig.matrix - m.covariance).max() < 1e-5
