"""End-to-end transmission pipelines: samples in, covariance estimate out."""

from __future__ import annotations

import numpy as np

from .channel import ChannelSpec, RealBlockChannel, build_real_block, transmit_uncoded, transport_signs
from .estimators import (
    CovarianceEstimate,
    sample_covariance,
    sign_quantize,
    signs_covariance,
    uncoded_covariance,
)

METHODS = ("original", "signs", "uncoded")


def estimate(method: str, samples: np.ndarray, spec: ChannelSpec | None = None,
             noise_seed=None, chan: RealBlockChannel | None = None,
             check_rate_region: bool = True) -> CovarianceEstimate:
    """Covariance estimate the central machine forms under ``method``.

    ``check_rate_region=False`` skips the per-call rate-region check for
    the signs pipeline; callers doing so must have admitted the channel
    already (the experiment harness checks once per channel).
    """
    if method == "original":
        return sample_covariance(samples)
    if method == "signs":
        bits = sign_quantize(samples)
        if spec is not None and check_rate_region:
            bits = transport_signs(bits, spec)
        return signs_covariance(bits)
    if method == "uncoded":
        if spec is None:
            raise ValueError("the uncoded pipeline needs a channel")
        chan = chan or build_real_block(spec)
        received = transmit_uncoded(samples, spec, noise_seed, chan=chan)
        return uncoded_covariance(received, chan)
    raise ValueError(f"unknown method {method!r}")
