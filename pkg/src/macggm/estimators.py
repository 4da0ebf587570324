"""Covariance estimates formed at the central machine."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import RealBlockChannel

logger = logging.getLogger(__name__)

PROVENANCES = ("original", "signs", "uncoded")

#: Floor applied to de-noised diagonal entries of the uncoded estimate.
DIAG_FLOOR = 1e-3


@dataclass(frozen=True)
class CovarianceEstimate:
    """A symmetric covariance estimate with positive diagonal.

    The plain sample covariance may carry exact zeros on the diagonal
    (degenerate data such as a single sample on a coordinate axis).

    ``clamps`` counts diagonal entries raised to the floor (uncoded only).
    """

    matrix: np.ndarray
    provenance: str
    n_used: int
    clamps: int = 0

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance estimate must be square")
        if np.abs(m - m.T).max(initial=0.0) > 1e-12:
            raise ValueError("covariance estimate must be symmetric")
        diag = np.diag(m)
        # a raw second moment is exactly zero on an all-zero column; the
        # solver rejects such input, the estimate itself is still well defined
        if np.any(diag < 0) or (self.provenance != "original" and np.any(diag == 0)):
            raise ValueError("covariance estimate needs a strictly positive diagonal")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def sample_covariance(samples: np.ndarray) -> CovarianceEstimate:
    """Second-moment matrix of the raw samples (the model is zero-mean)."""
    n = samples.shape[0]
    s = samples.T @ samples / n
    s = (s + s.T) / 2
    return CovarianceEstimate(s, "original", n)


def sign_quantize(samples: np.ndarray) -> np.ndarray:
    """Entrywise sign as int8, with ``sign(0) = +1``."""
    return np.where(samples >= 0, 1, -1).astype(np.int8)


def estimate_beta(bits_j: np.ndarray, bits_k: np.ndarray) -> float:
    """Fraction of samples on which two sign sequences agree."""
    bits_j = np.asarray(bits_j)
    bits_k = np.asarray(bits_k)
    if bits_j.shape != bits_k.shape or bits_j.size == 0:
        raise ValueError("bit vectors must be nonempty and of equal length")
    return float(np.mean(bits_j == bits_k))


def agreement_matrix(bits: np.ndarray) -> np.ndarray:
    """All pairwise agreement fractions at once."""
    n = bits.shape[0]
    b = bits.astype(np.float64)
    # sums of +/-1 products are integers, exact in float64
    return (n + b.T @ b) / (2.0 * n)


def correlation_from_beta(beta):
    """Invert the arcsine law: ``rho = -cos(pi * beta)``."""
    return -np.cos(np.pi * np.asarray(beta))


def signs_covariance(bits: np.ndarray) -> CovarianceEstimate:
    return signs_covariance_from_agreement(agreement_matrix(bits), bits.shape[0])


def signs_covariance_from_agreement(beta: np.ndarray, n: int) -> CovarianceEstimate:
    s = correlation_from_beta(beta)
    s = (s + s.T) / 2
    np.fill_diagonal(s, 1.0)
    return CovarianceEstimate(s, "signs", n)


def uncoded_covariance(received: np.ndarray, chan: RealBlockChannel,
                       diag_floor: float = DIAG_FLOOR) -> CovarianceEstimate:
    """De-mix and de-bias the received vectors into a d x d estimate.

    ``received`` has one row per channel use (two source samples each).
    """
    m = received.shape[0]
    if m < 1:
        raise ValueError("need at least one received vector")
    s_y = received.T @ received / m
    return uncoded_covariance_from_moment(s_y, chan, 2 * m, diag_floor)


def uncoded_covariance_from_moment(s_y: np.ndarray, chan: RealBlockChannel, n_used: int,
                                   diag_floor: float = DIAG_FLOOR) -> CovarianceEstimate:
    d = chan.d
    h_inv = chan.h_tilde_inv
    s_x = h_inv @ s_y @ h_inv.T - chan.noise_var * chan.noise_gram
    s = 0.5 * (s_x[:d, :d] + s_x[d:, d:])
    s = (s + s.T) / 2
    diag = np.diag(s).copy()
    low = diag < diag_floor
    clamps = int(low.sum())
    if clamps:
        logger.info("clamped %d diagonal entries to %g", clamps, diag_floor)
        s[np.diag_indices(d)] = np.maximum(diag, diag_floor)
    return CovarianceEstimate(s, "uncoded", n_used, clamps)


def lemma2_constant(chan: RealBlockChannel) -> float:
    """Tail constant ``c`` of the de-mixed sample covariance.

    ``3200 * (1 + noise_var / lambda_min**2)**2`` with ``lambda_min`` the
    smallest singular value of the real block channel.
    """
    return 3200.0 * (1.0 + chan.noise_var / chan.lambda_min ** 2) ** 2


def signs_tail_bound(n: int, delta: float) -> float:
    return 2.0 * math.exp(-2.0 * n * delta ** 2 / math.pi ** 2)


def uncoded_tail_bound(n: int, delta: float, c: float) -> float:
    return 8.0 * math.exp(-n * delta ** 2 / (2.0 * c))


def null_entry_sd(method: str, chan: RealBlockChannel | None = None) -> float:
    """Standard deviation of an off-diagonal estimate entry, times ``sqrt(n)``.

    Evaluated for independent unit-variance sources, i.e. on the entries
    that decide false positives. The sample covariance gives 1 and the
    signs estimate ``pi / 2`` (delta method at ``beta = 1/2``). For the
    uncoded estimate the de-mixed vector has covariance
    ``C = I + noise_var * H^-1 H^-T`` and Isserlis' theorem gives the
    variance of each block-averaged entry exactly; the root mean square
    over pairs is returned.
    """
    if method == "original":
        return 1.0
    if method == "signs":
        return math.pi / 2
    if method != "uncoded":
        raise ValueError(f"unknown method {method!r}")
    if chan is None:
        raise ValueError("the uncoded estimate needs a channel")
    d = chan.d
    c = np.eye(2 * d) + chan.noise_var * chan.noise_gram
    top, bot, cross = c[:d, :d], c[d:, d:], c[:d, d:]
    dt, db, dc = np.diag(top), np.diag(bot), np.diag(cross)
    # n * Var(0.5 * (u_j u_k + u_{j+d} u_{k+d})) over n / 2 channel uses
    var = 0.5 * (np.outer(dt, dt) + top ** 2 + np.outer(db, db) + bot ** 2
                 + 2 * (np.outer(dc, dc) + cross * cross.T))
    iu = np.triu_indices(d, k=1)
    return float(np.sqrt(var[iu].mean())) if d > 1 else 1.0
