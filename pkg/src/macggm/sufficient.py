"""Exact draws of the statistics each pipeline reduces its samples to.

Every estimator depends on the data only through a second-moment matrix
(original, uncoded) or a matrix of sign-agreement counts (signs). Drawing
those statistics directly has the same distribution as drawing ``n``
samples and reducing them, but costs nothing in ``n``. This is what makes
the very large sample sizes of the recovery theorems testable.

The sign statistic is only available in closed form for star models,
where the leaves are conditionally independent given the hub.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .channel import ChannelSpec, RealBlockChannel, build_real_block
from .estimators import (
    CovarianceEstimate,
    signs_covariance_from_agreement,
    uncoded_covariance_from_moment,
)
from .model import GgmModel


def wishart_moment(cov: np.ndarray, n: float, rng: np.random.Generator) -> np.ndarray:
    """``(1/n) sum x x^T`` for ``n`` i.i.d. N(0, cov) draws."""
    w = stats.wishart(df=n, scale=cov).rvs(random_state=rng)
    w = np.atleast_2d(w) / n
    return (w + w.T) / 2


def original_estimate(model: GgmModel, n: float, rng) -> CovarianceEstimate:
    s = wishart_moment(model.covariance, n, rng)
    return CovarianceEstimate(s, "original", int(min(n, 2 ** 62)))


def uncoded_estimate(model: GgmModel, n: float, spec: ChannelSpec, rng,
                     chan: RealBlockChannel | None = None) -> CovarianceEstimate:
    """Uncoded estimate from ``n`` samples (``n / 2`` channel uses)."""
    chan = chan or build_real_block(spec)
    d = model.d
    q_tilde = np.zeros((2 * d, 2 * d))
    q_tilde[:d, :d] = model.covariance
    q_tilde[d:, d:] = model.covariance
    q_y = chan.h_tilde @ q_tilde @ chan.h_tilde.T + spec.noise_var * np.eye(2 * d)
    m = math.floor(n / 2)
    s_y = wishart_moment(q_y, m, rng)
    return uncoded_covariance_from_moment(s_y, chan, int(min(2 * m, 2 ** 62)))


def star_parameters(model: GgmModel) -> tuple[int, float]:
    """Hub index and the common hub-leaf correlation of a star model."""
    adj = model.adjacency
    deg = adj.sum(axis=1)
    hub = int(np.argmax(deg))
    leaves = [j for j in range(model.d) if j != hub]
    if deg[hub] != model.d - 1 or any(deg[j] != 1 for j in leaves):
        raise ValueError("model is not a star")
    rhos = model.covariance[hub, leaves]
    if np.ptp(rhos) > 1e-12:
        raise ValueError("star sampler needs equal hub-leaf correlations")
    return hub, float(rhos[0])


@lru_cache(maxsize=8)
def _class_probabilities(n_leaves: int, rho: float) -> np.ndarray:
    """P(hub > 0 and exactly m leaves positive), for m = 0..n_leaves."""
    slope = rho / math.sqrt(1.0 - rho * rho)
    out = np.empty(n_leaves + 1)
    for m in range(n_leaves + 1):
        def f(x, m=m):
            p = special.ndtr(slope * x)
            return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * p ** m * (1 - p) ** (n_leaves - m)
        val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
        out[m] = math.comb(n_leaves, m) * val
    return out


@lru_cache(maxsize=64)
def _patterns(n_leaves: int, m: int) -> np.ndarray:
    """All +/-1 leaf patterns with exactly ``m`` plus signs, one per row."""
    combos = np.array(list(itertools.combinations(range(n_leaves), m)), dtype=np.intp)
    combos = combos.reshape(math.comb(n_leaves, m), m)
    pats = -np.ones((combos.shape[0], n_leaves))
    rows = np.repeat(np.arange(combos.shape[0]), m)
    pats[rows, combos.ravel()] = 1.0
    return pats


def star_sign_agreements(model: GgmModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Agreement-fraction matrix of ``n`` sign-quantised draws from a star model.

    Sign patterns are drawn as multinomial counts: first over (hub sign,
    number of positive leaves) classes, whose probabilities are
    one-dimensional integrals over the hub value, then uniformly over the
    patterns within each class (all equally likely by exchangeability).
    """
    hub, rho = star_parameters(model)
    d = model.d
    n_leaves = d - 1
    n = int(n)
    half = _class_probabilities(n_leaves, rho)
    probs = np.concatenate([half, half[::-1]])
    probs /= probs.sum()
    class_counts = rng.multinomial(n, probs)

    leaf_gram = np.zeros((n_leaves, n_leaves))
    hub_sum = np.zeros(n_leaves)
    for idx, count in enumerate(class_counts):
        if count == 0:
            continue
        # classes 0..L: positive hub with idx positive leaves; classes
        # L+1..2L+1: negative hub, whose law mirrors the positive one under
        # a global sign flip
        if idx <= n_leaves:
            hub_sign, m = 1.0, idx
        else:
            hub_sign, m = -1.0, idx - n_leaves - 1
        k = math.comb(n_leaves, m)
        if count < k:
            # fewer draws than patterns: pick the positive leaves directly
            order = rng.random((count, n_leaves)).argsort(axis=1)
            pats = -np.ones((count, n_leaves))
            np.put_along_axis(pats, order[:, :m], 1.0, axis=1)
            leaf_gram += pats.T @ pats
            hub_sum += hub_sign * pats.sum(axis=0)
            continue
        pats = _patterns(n_leaves, m)
        per = rng.multinomial(count, np.full(k, 1.0 / k)).astype(float)
        leaf_gram += (pats * per[:, None]).T @ pats
        hub_sum += hub_sign * (per @ pats)

    total = np.empty((d, d))
    leaves = [j for j in range(d) if j != hub]
    total[np.ix_(leaves, leaves)] = leaf_gram
    total[hub, leaves] = hub_sum
    total[leaves, hub] = hub_sum
    total[hub, hub] = n
    return (n + total) / (2.0 * n)


def signs_estimate(model: GgmModel, n: int, rng) -> CovarianceEstimate:
    return signs_covariance_from_agreement(star_sign_agreements(model, n, rng), int(n))
