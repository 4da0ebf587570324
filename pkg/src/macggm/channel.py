"""SIMO Gaussian multiple-access channel.

``d`` single-antenna machines talk to one receiver with ``d`` antennas:
``y = H s + z``. The Signs scheme needs the channel's rate region to admit
one bit per sample on every machine; the Uncoded scheme sends scaled raw
samples and sees the linear mixing plus noise.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ChannelError, RateRegionError, UnconstrainedChannelError

logger = logging.getLogger(__name__)

#: Largest d for which every subset constraint of the rate region is checked.
EXHAUSTIVE_MAX_DIM = 20


@dataclass(frozen=True)
class ChannelSpec:
    """Channel gains, per-machine power and per-real-component noise variance."""

    gains: np.ndarray
    power: float
    noise_var: float

    def __post_init__(self):
        h = np.array(self.gains, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ChannelError("gain matrix must be square (receive antennas = machines)")
        if not self.power > 0:
            raise ChannelError("power must be positive")
        if not self.noise_var >= 0:
            raise ChannelError("noise variance must be nonnegative")
        sv = np.linalg.svd(h, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ChannelError("gain matrix is not invertible")
        h.setflags(write=False)
        object.__setattr__(self, "gains", h)

    @property
    def d(self) -> int:
        return self.gains.shape[0]

    @property
    def snr(self) -> float:
        if self.noise_var == 0:
            return math.inf
        return self.power / self.noise_var

    @classmethod
    def identity(cls, d: int, snr: float = 3.0) -> ChannelSpec:
        return cls(np.eye(d), power=snr, noise_var=1.0)

    @classmethod
    def rayleigh(cls, d: int, snr: float, seed=None, *, complex_gains: bool = False) -> ChannelSpec:
        """Random gains.

        By default entries are i.i.d. real standard normal. With
        ``complex_gains`` they are circularly-symmetric complex normal
        with unit variance (real and imaginary parts N(0, 1/2)).
        """
        rng = np.random.default_rng(seed)
        if complex_gains:
            h = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
        else:
            h = rng.standard_normal((d, d)).astype(complex)
        return cls(h, power=snr, noise_var=1.0)


@dataclass(frozen=True)
class RealBlockChannel:
    """Real 2d x 2d form of the channel with the power scaling folded in."""

    h_tilde: np.ndarray
    h_tilde_inv: np.ndarray
    lambda_min: float
    noise_var: float

    @property
    def d(self) -> int:
        return self.h_tilde.shape[0] // 2

    @cached_property
    def noise_gram(self) -> np.ndarray:
        """``H~^-1 H~^-T``, the shape of the noise after inverting the channel."""
        return self.h_tilde_inv @ self.h_tilde_inv.T


@dataclass(frozen=True)
class RateRegionReport:
    feasible: bool
    binding_subset: tuple[int, ...]
    slack: float
    mode: str  # "exhaustive" or "partial"


def subset_capacity(spec: ChannelSpec, subset) -> float:
    """``lg det(snr * H_S^H H_S + I)`` for a set of transmitters (columns)."""
    idx = list(subset)
    h_s = spec.gains[:, idx]
    gram = spec.snr * (h_s.conj().T @ h_s) + np.eye(len(idx))
    sign, logdet = np.linalg.slogdet(gram)
    return float(logdet / math.log(2))


def _subset_capacities(spec: ChannelSpec, subsets: np.ndarray) -> np.ndarray:
    """Batched capacities for an (m, k) array of column index sets."""
    gram = spec.gains.conj().T @ spec.gains
    sub = gram[subsets[:, :, None], subsets[:, None, :]]
    sub = spec.snr * sub + np.eye(subsets.shape[1])
    _, logdet = np.linalg.slogdet(sub)
    return logdet / math.log(2)


def rate_region_feasible(spec: ChannelSpec, rates, *, chunk: int = 20000) -> RateRegionReport:
    """Check a rate vector against every subset constraint of the region.

    For ``d`` above ``EXHAUSTIVE_MAX_DIM`` only the singleton and full-set
    constraints are checked and the report is marked ``"partial"``.
    """
    rates = np.asarray(rates, dtype=float)
    d = spec.d
    if rates.shape != (d,):
        raise ChannelError(f"expected {d} rates, got shape {rates.shape}")
    if np.any(rates < 0):
        raise ChannelError("rates must be nonnegative")
    if spec.noise_var == 0:
        raise UnconstrainedChannelError("unconstrained: noise variance is zero")

    gram = spec.gains.conj().T @ spec.gains
    if np.allclose(gram, np.diag(np.diag(gram)), rtol=0.0, atol=1e-12 * np.abs(gram).max()):
        # orthogonal columns: subset capacities add up, so the tightest
        # subset collects every machine with negative individual slack
        single = np.log2(1.0 + spec.snr * np.diag(gram).real) - rates
        neg = np.flatnonzero(single < 0)
        if neg.size:
            best_slack, best_subset = float(single[neg].sum()), tuple(neg.tolist())
        else:
            i = int(np.argmin(single))
            best_slack, best_subset = float(single[i]), (i,)
        return RateRegionReport(best_slack >= -1e-12, best_subset, best_slack, "exhaustive")

    best_slack, best_subset = math.inf, ()
    if d <= EXHAUSTIVE_MAX_DIM:
        mode = "exhaustive"
        sizes = range(1, d + 1)
    else:
        mode = "partial"
        sizes = (1, d)
    for k in sizes:
        combos = itertools.combinations(range(d), k)
        while True:
            block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
            if block.size == 0:
                break
            caps = _subset_capacities(spec, block)
            slack = caps - rates[block].sum(axis=1)
            i = int(np.argmin(slack))
            if slack[i] < best_slack:
                best_slack, best_subset = float(slack[i]), tuple(block[i].tolist())
    # capacity is computed in floating point; equality is a boundary point
    feasible = best_slack >= -1e-12
    return RateRegionReport(feasible, best_subset, best_slack, mode)


def threshold_snr(gains: np.ndarray, target_rate: float = 1.0, *, hi: float = 1e6) -> float:
    """Smallest SNR at which ``target_rate`` bits on every machine is feasible.

    Bisection on the SNR using the same subset check as
    :func:`rate_region_feasible` (feasibility is monotone in SNR).
    """
    d = np.asarray(gains).shape[0]
    rates = np.full(d, target_rate)

    def ok(snr):
        return rate_region_feasible(ChannelSpec(gains, snr, 1.0), rates).feasible

    lo = 0.0
    if not ok(hi):
        raise ChannelError("target rate infeasible even at the upper SNR limit")
    for _ in range(100):
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def build_real_block(spec: ChannelSpec) -> RealBlockChannel:
    h_r, h_i = spec.gains.real, spec.gains.imag
    h_tilde = math.sqrt(spec.power / 2) * np.block([[h_r, -h_i], [h_i, h_r]])
    sv = np.linalg.svd(h_tilde, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise ChannelError("real block channel is singular")
    return RealBlockChannel(
        h_tilde=h_tilde,
        h_tilde_inv=np.linalg.inv(h_tilde),
        lambda_min=float(sv[-1]),
        noise_var=spec.noise_var,
    )


def pair_samples(samples: np.ndarray) -> np.ndarray:
    """Stack consecutive sample pairs as real and imaginary parts: (n/2, 2d)."""
    n = samples.shape[0]
    if n % 2:
        logger.warning("odd sample count %d: dropping the last sample", n)
        samples = samples[:-1]
    return np.hstack([samples[0::2], samples[1::2]])


def transmit_uncoded(samples: np.ndarray, spec: ChannelSpec, noise_seed=None,
                     chan: RealBlockChannel | None = None) -> np.ndarray:
    """Send scaled raw samples through the channel.

    Returns the received real vectors, one row per channel use, shape
    ``(n // 2, 2d)``. Each real noise component has variance
    ``spec.noise_var``.
    """
    if samples.shape[1] != spec.d:
        raise ChannelError("sample dimension does not match the channel")
    chan = chan or build_real_block(spec)
    x_tilde = pair_samples(samples)
    if x_tilde.shape[0] == 0:
        raise ChannelError("need at least two samples")
    received = x_tilde @ chan.h_tilde.T
    if spec.noise_var > 0:
        rng = np.random.default_rng(noise_seed)
        received += math.sqrt(spec.noise_var) * rng.standard_normal(received.shape)
    return received


def transport_signs(bits: np.ndarray, spec: ChannelSpec) -> np.ndarray:
    """Deliver sign bits over an ideal channel code.

    Raises ``RateRegionError`` unless one bit per sample on every machine
    lies in the rate region; the bits themselves arrive unchanged.
    """
    if spec.noise_var == 0:
        return bits
    report = rate_region_feasible(spec, np.ones(spec.d))
    if not report.feasible:
        raise RateRegionError(
            f"rate region violated: subset {report.binding_subset} short by {-report.slack:.4g} bits"
        )
    return bits
