import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from macggm.channel import ChannelSpec, build_real_block, transmit_uncoded
from macggm.estimators import (
    CovarianceEstimate,
    correlation_from_beta,
    estimate_beta,
    lemma2_constant,
    null_entry_sd,
    sample_covariance,
    sign_quantize,
    signs_covariance,
    signs_tail_bound,
    uncoded_covariance,
)
from macggm.model import generate_random_model, generate_star_model, identity_model, sample
from macggm.pipelines import estimate


def test_sample_covariance_rank_one():
    s = sample_covariance(np.array([[1.0, 0.0, 0.0]])).matrix
    expected = np.zeros((3, 3))
    expected[0, 0] = 1
    np.testing.assert_array_equal(s, expected)


def test_sample_covariance_lln_and_duplication():
    x = sample(identity_model(3), 10 ** 5, seed=1)
    s = sample_covariance(x).matrix
    assert np.abs(s - np.eye(3)).max() < 0.02
    s2 = sample_covariance(np.vstack([x, x])).matrix
    np.testing.assert_allclose(s2, s, rtol=1e-12, atol=1e-15)


def test_sign_quantize_examples():
    out = sign_quantize(np.array([[0.3, -2.0], [-0.1, 0.5]]))
    np.testing.assert_array_equal(out, [[1, -1], [-1, 1]])
    assert np.all(sign_quantize(np.full((3, 2), 4.2)) == 1)
    assert sign_quantize(np.array([[0.0, -0.0]])).tolist() == [[1, 1]]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-1e6, 1e6)))
def test_sign_quantize_is_plus_minus_one(x):
    b = sign_quantize(x)
    assert set(np.unique(b)) <= {-1, 1}
    assert np.all((b == 1) == (x >= 0))


def test_beta_examples():
    b = np.array([1, -1, 1, 1], dtype=np.int8)
    assert estimate_beta(b, b) == 1.0
    assert estimate_beta(b, -b) == 0.0
    with pytest.raises(ValueError):
        estimate_beta(b, b[:2])


def test_beta_arcsine_law():
    rho = 0.5
    rng = np.random.default_rng(0)
    n = 10 ** 6
    z = rng.standard_normal((n, 2))
    x1 = z[:, 0]
    x2 = rho * z[:, 0] + math.sqrt(1 - rho ** 2) * z[:, 1]
    beta = estimate_beta(sign_quantize(x1), sign_quantize(x2))
    assert abs(beta - 2 / 3) < 0.002


def test_correlation_from_beta_endpoints():
    assert correlation_from_beta(0.5) == pytest.approx(0.0, abs=1e-16)
    assert correlation_from_beta(1.0) == 1.0
    assert correlation_from_beta(0.0) == -1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 40))
def test_signs_covariance_range_and_diagonal(seed, n):
    x = np.random.default_rng(seed).standard_normal((n, 4))
    s = signs_covariance(sign_quantize(x)).matrix
    assert np.all(np.abs(s) <= 1)
    assert np.all(np.diag(s) == 1)
    assert np.array_equal(s, s.T)


def test_signs_tail_bound_holds_at_rho_06():
    rho, n, trials = 0.6, 10 ** 5, 100
    rng = np.random.default_rng(8)
    err = []
    for _ in range(trials):
        z = rng.standard_normal((n, 2))
        x2 = rho * z[:, 0] + math.sqrt(1 - rho ** 2) * z[:, 1]
        beta = estimate_beta(sign_quantize(z[:, 0]), sign_quantize(x2))
        err.append(abs(correlation_from_beta(beta) - rho))
    err = np.array(err)
    for delta in (0.01, 0.02, 0.05):
        assert np.mean(err >= delta) <= signs_tail_bound(n, delta)


@pytest.mark.parametrize("p", [2.0, 5.0])
def test_noiseless_uncoded_equals_sample_covariance(p):
    x = sample(generate_random_model(6, 0.3, seed=3), 400, seed=4)
    spec = ChannelSpec(np.eye(6), p, 0.0)
    chan = build_real_block(spec)
    s_unc = uncoded_covariance(transmit_uncoded(x, spec, chan=chan), chan).matrix
    assert np.abs(s_unc - sample_covariance(x).matrix).max() < 1e-8


def test_uncoded_identity_within_tail_scale():
    n = 10 ** 5
    spec = ChannelSpec.identity(4, 3.0)
    chan = build_real_block(spec)
    est = estimate("uncoded", sample(identity_model(4), n, seed=2), spec, noise_seed=3, chan=chan)
    c = lemma2_constant(chan)
    assert np.abs(est.matrix - np.eye(4)).max() < 5 * math.sqrt(c / n)
    # far tighter in practice
    assert np.abs(est.matrix - np.eye(4)).max() < 0.05


def test_uncoded_scalar_channel_unbiased():
    spec = ChannelSpec(np.array([[2.0]]), 2.0, 1.0)
    chan = build_real_block(spec)
    vals = []
    for seed in range(400):
        x = np.random.default_rng(seed).standard_normal((200, 1))
        vals.append(uncoded_covariance(transmit_uncoded(x, spec, noise_seed=10 ** 6 + seed,
                                                        chan=chan), chan, diag_floor=1e-9).matrix[0, 0])
    vals = np.array(vals)
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean() - 1.0) < 3 * se


def test_lemma2_constant_examples():
    assert lemma2_constant(build_real_block(ChannelSpec(np.eye(3), 2.0, 0.0))) == 3200
    assert lemma2_constant(build_real_block(ChannelSpec(np.eye(3), 2.0, 1.0))) == pytest.approx(12800)
    h = ChannelSpec.rayleigh(4, 1.0, seed=0, complex_gains=True).gains
    c1 = lemma2_constant(build_real_block(ChannelSpec(h, 1.0, 1.0)))
    c4 = lemma2_constant(build_real_block(ChannelSpec(h, 4.0, 1.0)))
    assert c4 < c1


def test_estimators_consistent_in_n():
    m = generate_random_model(5, 0.4, seed=7)
    spec = ChannelSpec.identity(5, 3.0)
    chan = build_real_block(spec)
    for method in ("signs", "uncoded"):
        errs = []
        for n in (10 ** 3, 10 ** 4, 10 ** 5):
            e = [np.abs(estimate(method, sample(m, n, seed=s), spec, noise_seed=s + 99,
                                 chan=chan).matrix - m.covariance).max() for s in range(20)]
            errs.append(np.mean(e))
        assert errs[0] > errs[1] > errs[2], (method, errs)


@pytest.mark.parametrize("method", ["original", "signs", "uncoded"])
def test_permutation_equivariance(method):
    x = sample(generate_random_model(5, 0.4, seed=1), 300, seed=2)
    perm = np.array([3, 0, 4, 1, 2])
    spec = ChannelSpec.identity(5, 3.0)
    a = estimate(method, x, spec, noise_seed=5).matrix
    if method == "uncoded":
        # the noise must follow the machines it belongs to
        spec0 = ChannelSpec(np.eye(5), 3.0, 0.0)
        a = estimate(method, x, spec0).matrix
        b = estimate(method, x[:, perm], spec0).matrix
    else:
        b = estimate(method, x[:, perm], spec, noise_seed=5).matrix
    np.testing.assert_allclose(b, a[np.ix_(perm, perm)], rtol=0, atol=1e-12)


def test_uncoded_diagonal_clamp():
    spec = ChannelSpec(np.eye(3), 1e-3, 1.0)
    chan = build_real_block(spec)
    x = sample(identity_model(3), 4, seed=0)
    clamped = 0
    for seed in range(50):
        est = uncoded_covariance(transmit_uncoded(x, spec, noise_seed=seed, chan=chan), chan)
        assert np.all(np.diag(est.matrix) >= 1e-3)
        clamped += est.clamps
    assert clamped > 0


def test_estimate_validation():
    with pytest.raises(ValueError):
        CovarianceEstimate(np.eye(2), "bogus", 1)
    with pytest.raises(ValueError):
        CovarianceEstimate(np.array([[1.0, 0.2], [0.1, 1.0]]), "original", 1)
    with pytest.raises(ValueError):
        CovarianceEstimate(np.array([[0.0, 0.0], [0.0, 1.0]]), "signs", 1)
    with pytest.raises(ValueError):
        CovarianceEstimate(np.array([[-1.0, 0.0], [0.0, 1.0]]), "original", 1)


def test_pipeline_rejects_unknown_method():
    with pytest.raises(ValueError):
        estimate("fancy", np.ones((2, 2)))
    with pytest.raises(ValueError):
        estimate("uncoded", np.ones((2, 2)))


@pytest.mark.parametrize("method", ["original", "signs", "uncoded"])
def test_null_entry_sd_matches_monte_carlo(method):
    d, n, reps = 4, 2000, 400
    spec = ChannelSpec.rayleigh(d, 3.0, seed=1)
    chan = build_real_block(spec)
    model = identity_model(d)
    vals = []
    for r in range(reps):
        est = estimate(method, sample(model, n, seed=r), spec, noise_seed=r + 5000, chan=chan)
        vals.append(est.matrix[np.triu_indices(d, 1)])
    vals = np.array(vals)
    empirical = math.sqrt(n * np.mean(vals.var(axis=0)))
    assert empirical == pytest.approx(null_entry_sd(method, chan), rel=0.06)


def test_null_entry_sd_noiseless_uncoded_is_one():
    chan = build_real_block(ChannelSpec(np.eye(3), 2.0, 0.0))
    assert null_entry_sd("uncoded", chan) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        null_entry_sd("uncoded")


def test_star_signs_estimate_close_to_truth():
    m = generate_star_model(6, 0.25)
    s = estimate("signs", sample(m, 10 ** 5, seed=0)).matrix
    assert np.abs(s - m.covariance).max() < 0.02
