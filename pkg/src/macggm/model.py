"""Ground-truth sparse Gaussian graphical models.

Models are zero-mean with unit marginal variances. The precision matrix
carries the graph: an off-diagonal entry is nonzero exactly on an edge.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IncoherenceError, ModelError

logger = logging.getLogger(__name__)

#: Above this dimension ``compute_constants`` refuses to run unless forced.
CONSTANTS_MAX_DIM = 150


@dataclass(frozen=True)
class GgmModel:
    """A zero-mean Gaussian graphical model with unit variances.

    Attributes
    ----------
    precision : ndarray, shape (d, d)
        Symmetric positive-definite precision matrix.
    covariance : ndarray, shape (d, d)
        Its inverse, with unit diagonal.
    seed : int or None
        Seed the model was generated from, kept for replay.
    """

    precision: np.ndarray
    covariance: np.ndarray
    seed: int | None = None
    edges: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        theta = np.array(self.precision, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        theta.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "precision", theta)
        object.__setattr__(self, "covariance", cov)
        d = theta.shape[0]
        rows, cols = np.nonzero(np.triu(theta, k=1))
        object.__setattr__(
            self, "edges", frozenset(zip(rows.tolist(), cols.tolist()))
        )
        if theta.shape != (d, d) or cov.shape != (d, d):
            raise ModelError("precision and covariance must be square and agree in size")

    @property
    def d(self) -> int:
        return self.precision.shape[0]

    @property
    def edge_set(self) -> frozenset:
        """Support of the precision matrix as ordered pairs, diagonal included."""
        rows, cols = np.nonzero(self.precision)
        return frozenset(zip(rows.tolist(), cols.tolist()))

    @property
    def adjacency(self) -> np.ndarray:
        adj = self.precision != 0
        np.fill_diagonal(adj, False)
        return adj

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def max_degree(self) -> int:
        # edgeless graphs use 1 so the sample-size bounds stay finite
        return max(int(self.degrees.max(initial=0)), 1)

    @property
    def theta_min(self) -> float:
        if not self.edges:
            return math.inf
        return float(np.abs(self.precision[self.adjacency]).min())

    def validate(self, tol: float = 1e-10) -> None:
        """Raise ``ModelError`` unless every model invariant holds."""
        theta, cov = self.precision, self.covariance
        d = self.d
        if not np.array_equal(theta, theta.T):
            raise ModelError("precision matrix is not symmetric")
        if np.linalg.eigvalsh(theta)[0] <= 0:
            raise ModelError("precision matrix is not positive definite")
        scale = max(1.0, np.abs(theta).max() * np.abs(cov).max())
        err = np.abs(theta @ cov - np.eye(d)).max()
        if err > tol * scale:
            raise ModelError(f"precision @ covariance deviates from identity by {err:.3g}")
        diag_err = np.abs(np.diag(cov) - 1.0).max()
        if diag_err > tol:
            raise ModelError(f"covariance diagonal deviates from 1 by {diag_err:.3g}")


@dataclass(frozen=True)
class ModelConstants:
    """Incoherence and covariance-control constants of a model."""

    alpha: float
    kappa_sigma: float
    kappa_gamma: float
    incoherence_value: float

    @property
    def admissible(self) -> bool:
        return self.incoherence_value < 1.0


def max_row_sum(a: np.ndarray) -> float:
    """The l_inf operator norm: largest absolute row sum."""
    if a.size == 0:
        return 0.0
    return float(np.abs(a).sum(axis=1).max())


def _from_precision(theta: np.ndarray, seed=None) -> GgmModel:
    """Rescale a PD precision matrix to unit variances without touching its zeros."""
    cov = np.linalg.inv(theta)
    cov = (cov + cov.T) / 2
    scale = np.sqrt(np.diag(cov))
    cov = cov / np.outer(scale, scale)
    np.fill_diagonal(cov, 1.0)
    theta = theta * np.outer(scale, scale)
    theta = (theta + theta.T) / 2
    return GgmModel(precision=theta, covariance=cov, seed=seed)


def _sample_graph(rng: np.random.Generator, d: int, edge_prob: float,
                  max_degree: int) -> list[tuple[int, int]]:
    iu, ju = np.triu_indices(d, k=1)
    keep = rng.random(iu.size) < edge_prob
    candidates = np.flatnonzero(keep)
    rng.shuffle(candidates)
    degree = np.zeros(d, dtype=int)
    edges = []
    for idx in candidates:
        j, k = int(iu[idx]), int(ju[idx])
        if degree[j] < max_degree and degree[k] < max_degree:
            degree[j] += 1
            degree[k] += 1
            edges.append((j, k))
    return edges


def generate_random_model(d: int, edge_prob: float = 0.1, max_degree: int = 5,
                          weight_low: float = -1.0, weight_high: float = 1.0,
                          seed: int | None = None, *, pd_margin: float = 1.0,
                          require_incoherence: bool = True,
                          max_retries: int = 100) -> GgmModel:
    """Draw a random sparse precision matrix with unit-variance covariance.

    Edges are drawn independently with probability ``edge_prob`` and then
    admitted in random order while both endpoints stay below
    ``max_degree``. Edge weights are uniform on ``[weight_low, weight_high]``;
    the matrix is made positive definite by adding
    ``(1 + pd_margin) * |lambda_min| + 0.01`` to the diagonal and finally
    rescaled so the implied variances equal one.

    When ``require_incoherence`` is set (and ``d`` is within the size
    limit of :func:`compute_constants`) models violating the incoherence
    condition are redrawn from the next seed in the stream, up to
    ``max_retries`` times.
    """
    if d < 2:
        raise ModelError("d must be at least 2")
    if not weight_low < weight_high:
        raise ModelError("weight_low must be below weight_high")
    if not 0.0 <= edge_prob <= 1.0:
        raise ModelError("edge_prob must lie in [0, 1]")
    if max_degree < 1:
        raise ModelError("max_degree must be positive")

    check = require_incoherence and d <= CONSTANTS_MAX_DIM
    seq = np.random.SeedSequence(seed)
    for attempt, child in enumerate(seq.spawn(max_retries)):
        rng = np.random.default_rng(child)
        edges = _sample_graph(rng, d, edge_prob, max_degree)
        theta = np.zeros((d, d))
        if edges:
            rows, cols = np.array(edges).T
            weights = rng.uniform(weight_low, weight_high, size=len(edges))
            theta[rows, cols] = weights
            theta[cols, rows] = weights
        lam_min = np.linalg.eigvalsh(theta)[0]
        shift = (1.0 + pd_margin) * abs(lam_min) + 0.01
        theta[np.diag_indices(d)] += shift
        model = _from_precision(theta, seed=seed)
        if not check:
            return model
        try:
            compute_constants(model)
        except IncoherenceError:
            logger.debug("attempt %d violated incoherence, redrawing", attempt)
            continue
        return model
    raise ModelError(f"no incoherent model found after {max_retries} draws")


def generate_star_model(d: int, rho: float = 0.25) -> GgmModel:
    """Star graph with vertex 0 as hub and hub-leaf correlation ``rho``.

    Leaves are conditionally independent given the hub, so leaf-leaf
    correlations are ``rho**2`` and the precision matrix is supported
    exactly on the star.
    """
    if d < 2:
        raise ModelError("d must be at least 2")
    cov = np.full((d, d), rho * rho)
    cov[0, :] = rho
    cov[:, 0] = rho
    np.fill_diagonal(cov, 1.0)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ModelError(f"star covariance with rho={rho} is not positive definite") from None
    theta = np.linalg.inv(cov)
    theta = (theta + theta.T) / 2
    theta[np.abs(theta) < 1e-12] = 0.0
    return GgmModel(precision=theta, covariance=cov)


def generate_chain_model(d: int, rho: float = 0.4) -> GgmModel:
    """AR(1) chain: correlation ``rho**|j-k|``, tridiagonal precision."""
    idx = np.arange(d)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    theta = np.zeros((d, d))
    s = 1.0 / (1.0 - rho * rho)
    theta[idx, idx] = (1 + rho * rho) * s
    theta[0, 0] = theta[-1, -1] = s
    theta[idx[:-1], idx[1:]] = -rho * s
    theta[idx[1:], idx[:-1]] = -rho * s
    return GgmModel(precision=theta, covariance=cov)


def identity_model(d: int) -> GgmModel:
    return GgmModel(precision=np.eye(d), covariance=np.eye(d))


def support_pairs(model: GgmModel) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the support S and its complement, both diagonal-inclusive."""
    mask = model.precision != 0
    s_rows, s_cols = np.nonzero(mask)
    c_rows, c_cols = np.nonzero(~mask)
    return (s_rows, s_cols), (c_rows, c_cols)


def hessian_block(cov: np.ndarray, rows: tuple[np.ndarray, np.ndarray],
                  cols: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Sub-block of ``cov kron cov`` indexed by pair lists.

    Entry ``[(j, k), (l, m)]`` is ``cov[j, l] * cov[k, m]``.
    """
    j, k = rows
    l, m = cols
    return cov[np.ix_(j, l)] * cov[np.ix_(k, m)]


def hessian(cov: np.ndarray) -> np.ndarray:
    """Full Hessian of the Gaussian log-likelihood at the truth, ``cov kron cov``."""
    return np.kron(cov, cov)


def compute_constants(model: GgmModel, *, strict: bool = True,
                      allow_large: bool = False) -> ModelConstants:
    """Incoherence parameter alpha and the kappa constants.

    Raises ``IncoherenceError`` when the incoherence norm reaches 1 and
    ``strict`` is set; otherwise alpha is reported as 0 for such models.
    """
    d = model.d
    if d > CONSTANTS_MAX_DIM and not allow_large:
        raise ModelError(
            f"d={d} exceeds {CONSTANTS_MAX_DIM}; pass allow_large=True to force"
        )
    cov = model.covariance
    s_idx, c_idx = support_pairs(model)
    gamma_ss = hessian_block(cov, s_idx, s_idx)
    cond = np.linalg.cond(gamma_ss)
    if not np.isfinite(cond) or cond > 1e14:
        raise ModelError(f"Gamma_SS is singular (condition number {cond:.3g})")
    gamma_ss_inv = np.linalg.inv(gamma_ss)
    if c_idx[0].size:
        gamma_cs = hessian_block(cov, c_idx, s_idx)
        incoherence = max_row_sum(gamma_cs @ gamma_ss_inv)
    else:
        incoherence = 0.0
    if incoherence >= 1.0 and strict:
        raise IncoherenceError(f"incoherence violated: norm {incoherence:.4f} >= 1")
    alpha = min(1.0, max(0.0, 1.0 - incoherence))
    return ModelConstants(
        alpha=alpha,
        kappa_sigma=max_row_sum(cov),
        kappa_gamma=max_row_sum(gamma_ss_inv),
        incoherence_value=incoherence,
    )


def sample(model: GgmModel, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from N(0, covariance)."""
    if n < 1:
        raise ValueError("n must be positive")
    try:
        chol = np.linalg.cholesky(model.covariance)
    except np.linalg.LinAlgError:
        raise ModelError("covariance is not positive definite") from None
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, model.d)) @ chol.T
