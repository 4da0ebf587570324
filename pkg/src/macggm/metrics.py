"""Structure-recovery scoring and sample-size bounds."""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import GgmModel, ModelConstants
from .solver import SolverConfig, SolverResult, glasso_solve


@dataclass(frozen=True)
class RecoveryReport:
    tpr: float
    fpr: float
    exact_recovery: bool
    sign_consistent: bool
    n_true_edges: int
    n_pred_edges: int


@dataclass(frozen=True)
class TheoremBounds:
    c_sign: float
    t_sign: float
    c_uncoded: float
    t_uncoded: float
    n_min_sign_a: float
    n_min_sign_b: float
    n_min_uncoded_a: float
    n_min_uncoded_b: float

    @property
    def consistent(self) -> bool:
        """Part (b) thresholds dominate part (a) ones (up to rounding)."""
        slack = 1 - 1e-12
        return (self.n_min_sign_b >= slack * self.n_min_sign_a
                and self.n_min_uncoded_b >= slack * self.n_min_uncoded_a)


def score_adjacency(true_adj: np.ndarray, pred_adj: np.ndarray) -> tuple[float, float, bool]:
    """TPR, FPR and exact support match over unordered off-diagonal pairs."""
    if true_adj.shape != pred_adj.shape:
        raise ValueError(f"dimension mismatch: {true_adj.shape} vs {pred_adj.shape}")
    iu = np.triu_indices(true_adj.shape[0], k=1)
    t = true_adj[iu].astype(bool)
    p = pred_adj[iu].astype(bool)
    n_true, n_non = int(t.sum()), int((~t).sum())
    tpr = (p & t).sum() / n_true if n_true else 1.0
    fpr = (p & ~t).sum() / n_non if n_non else 0.0
    return float(tpr), float(fpr), bool(np.array_equal(t, p))


def score(truth: GgmModel, result: SolverResult) -> RecoveryReport:
    if truth.d != result.d:
        raise ValueError(f"dimension mismatch: model d={truth.d}, result d={result.d}")
    true_adj = truth.adjacency
    pred_adj = result.adjacency
    tpr, fpr, exact = score_adjacency(true_adj, pred_adj)
    signs_ok = exact and all(
        np.sign(result.theta_hat[j, k]) == np.sign(truth.precision[j, k])
        for j, k in truth.edges
    )
    return RecoveryReport(
        tpr=tpr,
        fpr=fpr,
        exact_recovery=exact,
        sign_consistent=bool(signs_ok),
        n_true_edges=len(truth.edges),
        n_pred_edges=len(result.edges),
    )


def _kappa_product(constants: ModelConstants) -> float:
    ks, kg = constants.kappa_sigma, constants.kappa_gamma
    return max(ks * kg, ks ** 3 * kg ** 2)


def theorem_bounds(constants: ModelConstants, model: GgmModel, chan_c: float,
                   eps: float) -> TheoremBounds:
    """Sample sizes sufficient for subset and sign-consistent recovery.

    Parameters
    ----------
    constants : ModelConstants
        From :func:`macggm.model.compute_constants` on ``model``.
    model : GgmModel
        Supplies the maximum degree and the smallest edge weight.
    chan_c : float
        Tail constant of the uncoded estimate (see ``lemma2_constant``).
    eps : float
        Failure level, ``0 < eps <= d**-2``.
    """
    d = model.d
    if not 0 < eps <= d ** -2 * (1 + 1e-12):
        raise ValueError(f"eps must lie in (0, d^-2] = (0, {d ** -2:.3g}]")
    if not chan_c > 0:
        raise ValueError("chan_c must be positive")
    alpha = constants.alpha
    if not alpha > 0:
        raise ValueError("model violates incoherence (alpha = 0)")
    delta = model.max_degree
    k = _kappa_product(constants)
    inv_theta_min = 1.0 / model.theta_min
    growth = (1.0 + 8.0 / alpha) ** 2
    log_sign = math.log(2.0 / eps)
    log_unc = math.log(8.0 / eps)

    c_sign = 3.0 * math.sqrt(2.0) * math.pi * k
    t_sign = math.sqrt(2.0) * math.pi * max(constants.kappa_gamma * inv_theta_min, 3.0 * delta * k)
    root_c = math.sqrt(2.0 * chan_c)
    c_unc = 6.0 * root_c * k
    t_unc = 2.0 * root_c * max(constants.kappa_gamma * inv_theta_min, 3.0 * delta * k)
    return TheoremBounds(
        c_sign=c_sign,
        t_sign=t_sign,
        c_uncoded=c_unc,
        t_uncoded=t_unc,
        n_min_sign_a=c_sign ** 2 * delta ** 2 * growth * log_sign,
        n_min_sign_b=t_sign ** 2 * growth * log_sign,
        n_min_uncoded_a=c_unc ** 2 * delta ** 2 * growth * log_unc,
        n_min_uncoded_b=t_unc ** 2 * growth * log_unc,
    )


def recovery_probability(model: GgmModel, method: str, n: int, trials: int, seed=None, *,
                         lam: float, spec=None, sampler: str = "direct",
                         event: str = "exact", solver_cfg: SolverConfig | None = None) -> float:
    """Fraction of independent trials whose estimated support is exact.

    Each trial draws fresh samples and fresh channel noise from its own
    child of ``seed``. ``sampler="sufficient"`` draws the pipeline's
    sufficient statistic directly (see :mod:`macggm.sufficient`), which
    makes very large ``n`` affordable. ``event="sign_consistent"`` also
    requires the signs of the recovered edges to match.
    """
    from . import sufficient
    from .channel import build_real_block
    from .model import sample
    from .pipelines import estimate

    if trials < 1:
        raise ValueError("trials must be at least 1")
    if event not in ("exact", "sign_consistent"):
        raise ValueError(f"unknown event {event!r}")
    cfg = solver_cfg if solver_cfg is not None else SolverConfig(lam=lam)
    if cfg.lam != lam:
        cfg = dataclasses.replace(cfg, lam=lam)
    chan = build_real_block(spec) if spec is not None and method == "uncoded" else None
    hits = 0
    for child in np.random.SeedSequence(seed).spawn(trials):
        sample_ss, noise_ss = child.spawn(2)
        if sampler == "sufficient":
            rng = np.random.default_rng(sample_ss)
            if method == "original":
                est = sufficient.original_estimate(model, n, rng)
            elif method == "signs":
                est = sufficient.signs_estimate(model, n, rng)
            else:
                est = sufficient.uncoded_estimate(model, n, spec, rng, chan=chan)
        else:
            est = estimate(method, sample(model, n, seed=sample_ss), spec,
                           noise_seed=noise_ss, chan=chan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = score(model, glasso_solve(est, cfg))
        hits += rep.sign_consistent if event == "sign_consistent" else rep.exact_recovery
    return hits / trials
