"""l1-penalised Gaussian maximum likelihood (the graphical lasso).

The solver runs block coordinate descent on the dual: each column of the
working covariance ``W`` is updated by a lasso regression against the
remaining block, solved with cyclic coordinate descent. The precision
matrix is read off the lasso coefficients. Inputs only need a strictly
positive diagonal; they need not be positive semi-definite.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import SolverError
from .estimators import CovarianceEstimate

logger = logging.getLogger(__name__)

METHOD_MULTIPLIERS = {"original": 1.0, "signs": 4.0, "uncoded": 2.0 / 3.0}


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    max_sweeps: int = 200
    duality_tol: float = 1e-5
    inner_tol: float = 1e-7
    max_inner: int = 1000
    edge_threshold: float = 1e-8
    penalize_diagonal: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise SolverError("lambda must be nonnegative")
        if self.max_sweeps < 1:
            raise SolverError("max_sweeps must be positive")
        if not (self.duality_tol > 0 and self.inner_tol > 0):
            raise SolverError("tolerances must be positive")
        if not self.edge_threshold >= 0:
            raise SolverError("edge_threshold must be nonnegative")


@dataclass(frozen=True)
class SolverResult:
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    edges: frozenset
    signs: dict = field(repr=False)
    objective_trace: tuple
    converged: bool
    sweeps_used: int
    damped_updates: int = 0

    @property
    def d(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.d, self.d), dtype=bool)
        for j, k in self.edges:
            adj[j, k] = adj[k, j] = True
        return adj


def _as_matrix(s) -> np.ndarray:
    if isinstance(s, CovarianceEstimate):
        return np.array(s.matrix, dtype=float)
    return np.array(s, dtype=float)


def offdiag_l1(theta: np.ndarray) -> float:
    return float(np.abs(theta).sum() - np.abs(np.diag(theta)).sum())


def objective(theta: np.ndarray, s, lam: float, *, penalize_diagonal: bool = False) -> float:
    """``tr(theta S) - logdet(theta) + lam * sum_{j != k} |theta_jk|``."""
    s = _as_matrix(s)
    theta = np.asarray(theta, dtype=float)
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise SolverError("objective undefined: theta is not positive definite") from None
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    penalty = np.abs(theta).sum() if penalize_diagonal else offdiag_l1(theta)
    return float(np.sum(theta * s) - logdet + lam * penalty)


@numba.njit(cache=True)
def _soft(a, t):
    if a > t:
        return a - t
    if a < -t:
        return a + t
    return 0.0


@numba.njit(cache=True)
def _column_update(S, W, B, j, lam, inner_tol, max_inner):
    """Lasso update of column ``j``; returns 1 if the step had to be damped."""
    d = S.shape[0]
    beta = B[:, j].copy()
    beta[j] = 0.0
    wb = np.zeros(d)
    for k in range(d):
        if k == j:
            continue
        acc = 0.0
        for l in range(d):
            if l != j:
                acc += W[k, l] * beta[l]
        wb[k] = acc

    for _ in range(max_inner):
        dmax = 0.0
        for k in range(d):
            if k == j:
                continue
            wkk = W[k, k]
            new = _soft(S[k, j] - wb[k] + wkk * beta[k], lam) / wkk
            delta = new - beta[k]
            if delta != 0.0:
                for l in range(d):
                    if l != j:
                        wb[l] += W[l, k] * delta
                beta[k] = new
                if abs(delta) > dmax:
                    dmax = abs(delta)
        if dmax < inner_tol:
            break

    quad = 0.0
    for k in range(d):
        if k != j:
            quad += beta[k] * wb[k]
    damped = 0
    if W[j, j] - quad <= 1e-12 * W[j, j]:
        # new column would make W indefinite: move only part way from the
        # current (positive definite) column
        damped = 1
        others = np.empty(d - 1, dtype=np.int64)
        c = 0
        for k in range(d):
            if k != j:
                others[c] = k
                c += 1
        w11 = np.empty((d - 1, d - 1))
        w_old = np.empty(d - 1)
        b_new = np.empty(d - 1)
        for a in range(d - 1):
            w_old[a] = W[others[a], j]
            b_new[a] = beta[others[a]]
            for b in range(d - 1):
                w11[a, b] = W[others[a], others[b]]
        b_old = np.linalg.solve(w11, w_old)
        t = 1.0
        for _ in range(60):
            t *= 0.5
            b_t = (1.0 - t) * b_old + t * b_new
            w_t = w11 @ b_t
            if W[j, j] - b_t @ w_t > 1e-12 * W[j, j]:
                break
        for a in range(d - 1):
            beta[others[a]] = b_t[a]
            wb[others[a]] = w_t[a]

    for k in range(d):
        if k != j:
            W[k, j] = wb[k]
            W[j, k] = wb[k]
        B[k, j] = beta[k]
    return damped


@numba.njit(cache=True)
def _sweep(S, W, B, lam, inner_tol, max_inner):
    damped = 0
    for j in range(S.shape[0]):
        damped += _column_update(S, W, B, j, lam, inner_tol, max_inner)
    return damped


def _precision_from_coefficients(W: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = W.shape[0]
    theta = np.empty((d, d))
    for j in range(d):
        beta = B[:, j].copy()
        beta[j] = 0.0
        theta_jj = 1.0 / (W[j, j] - W[:, j] @ beta)
        theta[:, j] = -beta * theta_jj
        theta[j, j] = theta_jj
    return (theta + theta.T) / 2


def _initial_covariance(s: np.ndarray, lam: float, init: str, diag_shift: float) -> np.ndarray:
    d = s.shape[0]
    diag = np.diag(np.diag(s))
    if init == "diagonal":
        w = diag.copy()
    elif init == "sample":
        w = None
        thresholded = np.sign(s) * np.maximum(np.abs(s) - lam, 0.0)
        np.fill_diagonal(thresholded, np.diag(s))
        for candidate in (s, thresholded):
            try:
                np.linalg.cholesky(candidate + diag_shift * np.eye(d))
            except np.linalg.LinAlgError:
                continue
            w = candidate.copy()
            break
        if w is None:
            w = diag.copy()
    else:
        raise SolverError(f"unknown init {init!r}")
    w[np.diag_indices(d)] += diag_shift
    return w


def glasso_solve(s, cfg: SolverConfig, *, init: str = "sample") -> SolverResult:
    """Minimise ``tr(theta S) - logdet(theta) + lam * ||theta||_{1,off}``.

    Parameters
    ----------
    s : CovarianceEstimate or array-like, shape (d, d)
        Symmetric input with strictly positive diagonal.
    cfg : SolverConfig
    init : {"sample", "diagonal"}
        Starting covariance. ``"sample"`` starts from ``S`` itself, falling
        back to its soft-thresholded version and then to ``diag(S)`` when
        those are not positive definite; ``"diagonal"`` starts from
        ``diag(S)``. With ``cfg.penalize_diagonal`` the diagonal is shifted
        by ``lam`` as in the classic glasso.

    Returns
    -------
    SolverResult
        Non-convergence is reported through ``converged=False``.
    """
    s = _as_matrix(s)
    d = s.shape[0]
    if s.shape != (d, d):
        raise SolverError("input must be square")
    if np.abs(s - s.T).max(initial=0.0) > 1e-10:
        raise SolverError("input must be symmetric")
    if np.any(np.diag(s) <= 0):
        raise SolverError("input needs a strictly positive diagonal")
    s = (s + s.T) / 2

    lam = float(cfg.lam)
    diag_shift = lam if cfg.penalize_diagonal else 0.0
    w = _initial_covariance(s, lam, init, diag_shift)
    b = np.zeros((d, d))
    off = ~np.eye(d, dtype=bool)
    scale = np.abs(s[off]).mean() if d > 1 else 0.0
    if scale == 0.0:
        scale = 1.0

    trace = []
    converged = False
    damped = 0
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        w_old = w.copy()
        damped += _sweep(s, w, b, lam, cfg.inner_tol, cfg.max_inner)
        theta = _precision_from_coefficients(w, b)
        try:
            trace.append(objective(theta, s, lam, penalize_diagonal=cfg.penalize_diagonal))
        except SolverError:
            trace.append(math.inf)
        change = np.abs(w - w_old)[off].mean() if d > 1 else 0.0
        if change < cfg.duality_tol * scale:
            converged = True
            break
    if damped:
        logger.info("glasso: %d damped column updates", damped)
    if not converged:
        warnings.warn(f"glasso did not converge in {cfg.max_sweeps} sweeps", RuntimeWarning)

    theta = _precision_from_coefficients(w, b)
    support = (b != 0) | (b.T != 0)
    np.fill_diagonal(support, False)
    support &= np.abs(theta) > cfg.edge_threshold
    rows, cols = np.nonzero(np.triu(support, k=1))
    edges = frozenset(zip(rows.tolist(), cols.tolist()))
    signs = {(j, k): int(np.sign(theta[j, k])) for j, k in edges}
    return SolverResult(
        theta_hat=theta,
        sigma_hat=(w + w.T) / 2,
        edges=edges,
        signs=signs,
        objective_trace=tuple(trace),
        converged=converged,
        sweeps_used=sweeps,
        damped_updates=damped,
    )


def kkt_residuals(s, result: SolverResult, lam: float) -> tuple[float, float]:
    """Subgradient optimality residuals of a solution.

    Returns the largest ``|S_jk - W_jk + lam * sign(theta_jk)|`` over
    declared edges (and ``|S_jj - W_jj|`` on the diagonal), and the largest
    excess ``|S_jk - W_jk| - lam`` over non-edges, with ``W`` the inverse
    of the returned precision matrix.
    """
    s = _as_matrix(s)
    d = s.shape[0]
    w = np.linalg.inv(result.theta_hat)
    grad = s - w
    adj = result.adjacency
    edge_res = np.abs(np.diag(grad)).max(initial=0.0)
    if adj.any():
        stationarity = grad + lam * np.sign(result.theta_hat)
        edge_res = max(edge_res, float(np.abs(stationarity[adj]).max()))
    non = ~adj & ~np.eye(d, dtype=bool)
    non_excess = float((np.abs(grad[non]) - lam).max()) if non.any() else -lam
    return float(edge_res), non_excess


def theoretical_lambda(alpha: float, n: int, eps: float, *, d: int | None = None,
                       variant: str = "stated", c: float | None = None) -> float:
    """Regularisation weight from the recovery theorems.

    ``variant="stated"`` gives ``(8 pi / alpha) sqrt(ln(2 / eps) / (2 n))``.
    ``variant="c_based"`` matches the uncoded tail bound instead:
    ``(8 / alpha) sqrt(2 c ln(8 / eps) / n)``.
    """
    if not (0 < alpha <= 1) or not eps > 0 or (d is not None and eps > d ** -2):
        warnings.warn("lambda requested outside the theorem regime", RuntimeWarning)
    if variant == "stated":
        return (8 * math.pi / alpha) * math.sqrt(math.log(2 / eps) / (2 * n))
    if variant == "c_based":
        if c is None:
            raise ValueError("c_based variant needs the channel constant c")
        return (8 / alpha) * math.sqrt(2 * c * math.log(8 / eps) / n)
    raise ValueError(f"unknown variant {variant!r}")


def heuristic_lambda(base: float, method: str) -> float:
    """Scale the best original-data weight for the given pipeline."""
    try:
        return base * METHOD_MULTIPLIERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
