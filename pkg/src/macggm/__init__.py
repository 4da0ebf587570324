"""Learning Gaussian graphical model structure over a multiple-access channel.

Each coordinate of a Gaussian vector lives on its own machine. The machines
send either one sign bit per sample (``signs``) or scaled raw samples
(``uncoded``) through a SIMO Gaussian multiple-access channel, and the
receiver runs the graphical lasso on the covariance estimate it can form.
"""

from .channel import ChannelSpec, RateRegionReport, build_real_block, rate_region_feasible, threshold_snr
from .errors import (
    ChannelError,
    ConfigError,
    IncoherenceError,
    MacGgmError,
    ModelError,
    RateRegionError,
    SolverError,
    UnconstrainedChannelError,
)
from .estimators import CovarianceEstimate, lemma2_constant, signs_tail_bound, uncoded_tail_bound
from .harness import ExperimentConfig, load_config, run_experiment, validate_config
from .metrics import RecoveryReport, TheoremBounds, recovery_probability, score, theorem_bounds
from .model import (
    GgmModel,
    ModelConstants,
    compute_constants,
    generate_random_model,
    generate_star_model,
    sample,
)
from .pipelines import METHODS, estimate
from .solver import SolverConfig, SolverResult, glasso_solve, heuristic_lambda, theoretical_lambda

__version__ = "0.1.0"

__all__ = [
    "ChannelError", "ChannelSpec", "ConfigError", "CovarianceEstimate", "ExperimentConfig",
    "GgmModel", "IncoherenceError", "METHODS", "MacGgmError", "ModelConstants", "ModelError",
    "RateRegionError", "RateRegionReport", "RecoveryReport", "SolverConfig", "SolverError",
    "SolverResult", "TheoremBounds", "UnconstrainedChannelError", "build_real_block",
    "compute_constants", "estimate", "generate_random_model", "generate_star_model",
    "glasso_solve", "heuristic_lambda", "lemma2_constant", "load_config", "rate_region_feasible",
    "recovery_probability", "run_experiment", "sample", "score", "signs_tail_bound",
    "theorem_bounds", "theoretical_lambda", "threshold_snr", "uncoded_tail_bound",
    "validate_config",
]
