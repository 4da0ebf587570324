"""Declarative experiment runner.

An experiment sweeps one axis (dimension, sample size, or SNR), redraws
graphs and samples at every grid point, pushes each draw through the
requested pipelines, solves, scores and writes one CSV row per
(method, point, repeat, trial).

Random streams are derived hierarchically from the master seed as
``(point, repeat, trial, stream)`` so that the draws seen by one method
never depend on which other methods are configured.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import sufficient
from .channel import ChannelSpec, build_real_block, rate_region_feasible
from .errors import ConfigError, MacGgmError
from .estimators import lemma2_constant, null_entry_sd
from .metrics import score, score_adjacency
from .model import (
    CONSTANTS_MAX_DIM,
    GgmModel,
    compute_constants,
    generate_random_model,
    generate_star_model,
    sample,
)
from .pipelines import METHODS, estimate
from .solver import METHOD_MULTIPLIERS, SolverConfig, glasso_solve, theoretical_lambda

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

KINDS = ("dim_sweep", "sample_sweep", "star_recovery", "snr_sweep", "single_run")
SWEEP_AXIS = {"dim_sweep": "d", "sample_sweep": "n", "star_recovery": "n", "snr_sweep": "snr"}
SCHEMA_VERSION = 1
CSV_COLUMNS = ("method", "d", "n", "snr", "seed", "tpr", "fpr", "exact", "sign_consistent",
               "lambda", "sweeps", "converged", "clamps", "repeat", "trial", "status")
WORKERS_ENV = "MACGGM_WORKERS"

# stream ids under (point, repeat, trial)
_MODEL, _SAMPLES, _NOISE, _GAINS, _CALIBRATION = range(5)


@dataclass(frozen=True)
class ModelSpec:
    type: str = "random"
    d: int = 50
    edge_prob: float = 0.1
    max_degree: int = 5
    weight_low: float = -1.0
    weight_high: float = 1.0
    pd_margin: float = 1.0
    rho: float = 0.25


@dataclass(frozen=True)
class ChannelConfig:
    gains: object = "identity"  # "identity", "rayleigh", "rayleigh_complex", or nested lists
    snr: float | None = 3.0
    power: float | None = None
    noise_var: float | None = None
    redraw: bool = True


@dataclass(frozen=True)
class LambdaPolicy:
    policy: str = "heuristic"  # theoretical | heuristic | grid | universal
    base: float = 0.1
    values: tuple = ()
    # a {method: factor} table, or "noise_matched" to scale by each
    # estimator's null-entry standard deviation (see null_entry_sd)
    multipliers: object = field(default_factory=lambda: dict(METHOD_MULTIPLIERS))
    calibrate: str = "original"  # grid only: "original" or "each"
    epsilon: float | None = None  # theoretical: default 0.5 / d^2
    scale: float = 1.0
    variant: str = "stated"
    gamma: float = 0.05  # universal: target chance of any null entry crossing lambda
    incoherence: bool = False  # universal: divide by alpha as the recovery analysis asks


@dataclass(frozen=True)
class SolverSettings:
    max_sweeps: int = 200
    duality_tol: float = 1e-5
    inner_tol: float = 1e-7
    edge_threshold: float = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "single_run"
    model: ModelSpec = field(default_factory=ModelSpec)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    methods: tuple = METHODS
    grid: tuple = ()
    n: int = 1000
    trials: int = 1
    graph_repeats: int = 1
    lam: LambdaPolicy = field(default_factory=LambdaPolicy)
    solver: SolverSettings = field(default_factory=SolverSettings)
    sampler: str = "direct"  # "direct" or "sufficient"
    master_seed: int = 0

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) and k != "gains" else v for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from parsed TOML. Raises ``ConfigError`` on structural problems."""
    data = dict(data)
    sections = {
        "model": ModelSpec,
        "channel": ChannelConfig,
        "lambda": LambdaPolicy,
        "solver": SolverSettings,
    }
    built = {}
    for key, cls in sections.items():
        built["lam" if key == "lambda" else key] = _build(cls, data.pop(key, None), key)
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"model", "channel", "lam", "solver"}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("methods", "grid"):
        if key in data:
            data[key] = tuple(data[key])
    try:
        return ExperimentConfig(**data, **built)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def _channel_power(ch: ChannelConfig, snr: float | None = None) -> tuple[float, float]:
    if snr is not None:
        return float(snr), 1.0
    if ch.power is not None and ch.noise_var is not None:
        return float(ch.power), float(ch.noise_var)
    if ch.snr is None:
        raise ConfigError("channel needs snr or (power, noise_var)")
    return float(ch.snr), 1.0


def _fixed_gains(ch: ChannelConfig, d: int) -> np.ndarray | None:
    """Gain matrix when it does not depend on the random stream."""
    if ch.gains == "identity":
        return np.eye(d)
    if isinstance(ch.gains, (list, tuple)):
        # rows of interleaved (real, imag) pairs
        arr = np.array(ch.gains, dtype=float)
        if arr.ndim != 2 or arr.shape[1] % 2:
            raise ConfigError("explicit gains need rows of interleaved real/imag pairs")
        return arr[:, 0::2] + 1j * arr[:, 1::2]
    return None


def _grid_points(cfg: ExperimentConfig) -> list[dict]:
    axis = SWEEP_AXIS.get(cfg.kind)
    if axis is None:
        return [{}]
    return [{axis: v} for v in cfg.grid]


def validate_config(cfg) -> list[str]:
    """Structural and regime checks. Returns violations; never raises."""
    problems: list[str] = []
    if isinstance(cfg, dict):
        try:
            cfg = config_from_dict(cfg)
        except (ConfigError, TypeError, ValueError) as exc:
            return [str(exc)]
    if cfg.kind not in KINDS:
        problems.append(f"unknown experiment kind {cfg.kind!r}")
    if not cfg.methods:
        problems.append("methods must be nonempty")
    bad = [m for m in cfg.methods if m not in METHODS]
    if bad:
        problems.append(f"unknown methods {bad}")
    if cfg.kind in SWEEP_AXIS and not cfg.grid:
        problems.append(f"{cfg.kind} needs a nonempty grid")
    if cfg.trials < 1:
        problems.append("trials must be at least 1")
    if cfg.graph_repeats < 1:
        problems.append("graph_repeats must be at least 1")
    if cfg.sampler not in ("direct", "sufficient"):
        problems.append(f"unknown sampler {cfg.sampler!r}")
    if cfg.sampler == "sufficient" and "signs" in cfg.methods and cfg.model.type != "star":
        problems.append("sufficient-statistic sampling of signs needs a star model")
    if cfg.model.type not in ("random", "star"):
        problems.append(f"unknown model type {cfg.model.type!r}")
    if cfg.model.d < 2:
        problems.append("model dimension must be at least 2")
    if cfg.model.weight_low >= cfg.model.weight_high:
        problems.append("weight_low must be below weight_high")
    if cfg.n < 2 and cfg.kind not in ("sample_sweep", "star_recovery"):
        problems.append("n must be at least 2")

    pol = cfg.lam
    if pol.policy not in ("theoretical", "heuristic", "grid", "universal"):
        problems.append(f"unknown lambda policy {pol.policy!r}")
    if pol.policy == "universal" and not 0 < pol.gamma < 1:
        problems.append("lambda.gamma must lie in (0, 1)")
    if pol.policy == "grid" and not pol.values:
        problems.append("grid lambda policy needs values")
    if pol.policy == "grid" and pol.calibrate not in ("original", "each"):
        problems.append("lambda.calibrate must be 'original' or 'each'")
    if pol.policy in ("heuristic", "grid") and pol.calibrate == "original":
        if isinstance(pol.multipliers, dict):
            missing = [m for m in cfg.methods if m not in pol.multipliers]
            if missing:
                problems.append(f"no lambda multiplier for {missing}")
        elif pol.multipliers != "noise_matched":
            problems.append("lambda.multipliers must be a table or 'noise_matched'")
    if pol.policy == "theoretical":
        if pol.variant not in ("stated", "c_based"):
            problems.append(f"unknown lambda variant {pol.variant!r}")
        dims = [p.get("d", cfg.model.d) for p in _grid_points(cfg)] or [cfg.model.d]
        if pol.epsilon is not None and pol.epsilon > min(dims) ** -2:
            problems.append(
                f"warning: epsilon={pol.epsilon} is outside the theorem regime eps <= d^-2"
            )
        if max(dims) > CONSTANTS_MAX_DIM:
            problems.append("theoretical lambda needs alpha, unavailable above d=150")

    for point in _grid_points(cfg):
        try:
            _channel_power(cfg.channel, point.get("snr"))
        except ConfigError as exc:
            problems.append(str(exc))
            break

    # rate-region admission for signs on deterministic channels
    if "signs" in cfg.methods and not problems:
        for point in _grid_points(cfg) or [{}]:
            d = point.get("d", cfg.model.d)
            try:
                gains = _fixed_gains(cfg.channel, d)
                p, nv = _channel_power(cfg.channel, point.get("snr"))
            except ConfigError as exc:
                problems.append(str(exc))
                break
            if gains is None or nv == 0:
                continue
            try:
                report = rate_region_feasible(ChannelSpec(gains, p, nv), np.ones(d))
            except MacGgmError as exc:
                problems.append(str(exc))
                continue
            if not report.feasible:
                problems.append(
                    f"signs infeasible at d={d}, snr={p / nv:g}: one bit per sample violates the "
                    f"multiple-access rate region (subset {report.binding_subset}, "
                    f"short by {-report.slack:.3g} bits)"
                )
    return problems


def _seed(cfg: ExperimentConfig, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.master_seed, spawn_key=tuple(int(k) for k in key))


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _make_model(cfg: ExperimentConfig, d: int, seed: int) -> GgmModel:
    spec = cfg.model
    if spec.type == "star":
        return generate_star_model(d, spec.rho)
    return generate_random_model(
        d, spec.edge_prob, spec.max_degree, spec.weight_low, spec.weight_high,
        seed=seed, pd_margin=spec.pd_margin,
    )


def _make_channel(cfg: ExperimentConfig, d: int, snr: float | None,
                  gains_seed: np.random.SeedSequence) -> ChannelSpec:
    p, nv = _channel_power(cfg.channel, snr)
    gains = _fixed_gains(cfg.channel, d)
    if gains is None:
        complex_gains = cfg.channel.gains == "rayleigh_complex"
        if cfg.channel.gains not in ("rayleigh", "rayleigh_complex"):
            raise ConfigError(f"unknown gains {cfg.channel.gains!r}")
        gains = ChannelSpec.rayleigh(d, p, gains_seed, complex_gains=complex_gains).gains
    return ChannelSpec(gains, p, nv)


def _solver_config(cfg: ExperimentConfig, lam: float) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(lam=lam, max_sweeps=s.max_sweeps, duality_tol=s.duality_tol,
                        inner_tol=s.inner_tol, edge_threshold=s.edge_threshold)


def _draw_estimate(cfg, method, model, n, spec, chan, samples, noise_ss):
    if cfg.sampler == "sufficient":
        # one statistic covers both sampling and channel noise
        rng = np.random.default_rng(
            np.random.SeedSequence(noise_ss.entropy,
                                   spawn_key=noise_ss.spawn_key + (METHODS.index(method),)))
        if method == "original":
            return sufficient.original_estimate(model, n, rng)
        if method == "signs":
            return sufficient.signs_estimate(model, n, rng)
        return sufficient.uncoded_estimate(model, n, spec, rng, chan=chan)
    return estimate(method, samples, spec, noise_seed=noise_ss, chan=chan,
                    check_rate_region=False)


def _calibrate(cfg, model, n, spec, chan, ss, methods) -> dict[str, float]:
    """Best grid lambda per method on a held-out draw (max TPR - FPR).

    Ties are common once recovery is easy; the middle of the tied run of
    grid values is returned so the choice is not pinned to an edge of the
    recovery window.
    """
    values = sorted(cfg.lam.values)
    samples = sample(model, n, seed=ss) if cfg.sampler == "direct" else None
    out = {}
    for method in methods:
        est = _draw_estimate(cfg, method, model, n, spec, chan, samples, ss)
        gains = []
        for lam in values:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = glasso_solve(est, _solver_config(cfg, lam))
            tpr, fpr, _ = score_adjacency(model.adjacency, res.adjacency)
            gains.append(tpr - fpr)
        best = [v for v, g in zip(values, gains) if g >= max(gains) - 1e-12]
        out[method] = best[(len(best) - 1) // 2]
    return out


def universal_lambda(d: int, n: float, gamma: float, sd: float = 1.0) -> float:
    """Bonferroni threshold for the off-diagonal noise of an estimate.

    ``sd * z / sqrt(n)`` with ``z`` the two-sided normal quantile at level
    ``gamma`` spread over the ``d (d - 1) / 2`` pairs, so that with
    probability about ``1 - gamma`` no entry of an independent pair crosses
    it. ``sd`` is the estimator's null-entry standard deviation times
    ``sqrt(n)`` (see ``null_entry_sd``).
    """
    pairs = d * (d - 1) / 2
    z = float(special.ndtri(1.0 - gamma / (2.0 * pairs)))
    return sd * z / math.sqrt(n)


def _multiplier(pol: LambdaPolicy, method: str, chan) -> float:
    if pol.multipliers == "noise_matched":
        return null_entry_sd(method, chan)
    return float(pol.multipliers.get(method, 1.0))


def _lambdas(cfg, model, n, spec, chan, calib_ss, cache: dict) -> dict[str, float]:
    """Per-method weights; calibration and model constants are cached per graph."""
    pol = cfg.lam
    if pol.policy == "heuristic":
        return {m: pol.base * _multiplier(pol, m, chan) for m in cfg.methods}
    if pol.policy == "universal":
        inflate = 1.0
        if pol.incoherence:
            if "alpha" not in cache:
                cache["alpha"] = compute_constants(model).alpha
            inflate = 1.0 / cache["alpha"]
        return {m: inflate * universal_lambda(model.d, n, pol.gamma, null_entry_sd(m, chan))
                for m in cfg.methods}
    if pol.policy == "theoretical":
        if "alpha" not in cache:
            cache["alpha"] = compute_constants(model).alpha
        eps = pol.epsilon if pol.epsilon is not None else 0.5 / model.d ** 2
        out = {}
        for m in cfg.methods:
            variant = pol.variant if m == "uncoded" else "stated"
            c = lemma2_constant(chan) if chan is not None else None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out[m] = pol.scale * theoretical_lambda(cache["alpha"], n, eps, d=model.d,
                                                        variant=variant, c=c)
        return out
    if "calibrated" not in cache:
        methods = cfg.methods if pol.calibrate == "each" else ["original"]
        cache["calibrated"] = _calibrate(cfg, model, n, spec, chan, calib_ss, methods)
    best = cache["calibrated"]
    if pol.calibrate == "each":
        return dict(best)
    return {m: best["original"] * _multiplier(pol, m, chan) for m in cfg.methods}


def _run_unit(cfg: ExperimentConfig, point_idx: int, point: dict, repeat: int) -> list[dict]:
    """All trials and methods for one grid point and one graph draw."""
    d = int(point.get("d", cfg.model.d))
    n = point.get("n", cfg.n)
    n = int(n) if float(n) < 2 ** 62 else float(n)
    snr = point.get("snr")
    # an SNR sweep shares graphs, channels and samples across SNR values
    pkey = 0 if cfg.kind == "snr_sweep" else point_idx
    # the SNR sweep holds one model fixed and redraws only channels and samples
    mrep = 0 if cfg.kind == "snr_sweep" else repeat
    model = _make_model(cfg, d, _int_seed(_seed(cfg, pkey, mrep, 0, _MODEL)))

    need_channel = any(m in ("signs", "uncoded") for m in cfg.methods)
    # the configured SNR labels every row, whether or not a method uses the channel
    power, noise_var = _channel_power(cfg.channel, snr)
    snr_label = "inf" if noise_var == 0 else f"{power / noise_var:g}"
    rows = []
    lam_cache: dict = {}
    admitted: dict = {}
    for trial in range(cfg.trials):
        base = (pkey, repeat, trial)
        sample_ss = _seed(cfg, *base, _SAMPLES)
        gains_ss = _seed(cfg, *(base if cfg.channel.redraw else (pkey, repeat, 0)), _GAINS)
        spec = chan = None
        if need_channel:
            spec = _make_channel(cfg, d, snr, gains_ss)
            chan = build_real_block(spec)
        lams = _lambdas(cfg, model, n, spec, chan, _seed(cfg, pkey, repeat, 0, _CALIBRATION),
                        lam_cache)
        samples = sample(model, n, seed=sample_ss) if cfg.sampler == "direct" else None
        signs_ok = True
        if "signs" in cfg.methods and spec is not None and spec.noise_var > 0:
            key = (spec.gains.tobytes(), spec.power, spec.noise_var)
            if key not in admitted:
                admitted[key] = rate_region_feasible(spec, np.ones(d)).feasible
            signs_ok = admitted[key]
        for method in cfg.methods:
            row = {
                "method": method, "d": d, "n": n,
                "snr": snr_label,
                "seed": _int_seed(sample_ss), "lambda": lams[method],
                "repeat": repeat, "trial": trial,
            }
            if method == "signs" and not signs_ok:
                row.update(status="rate_region_violated")
                rows.append(row)
                continue
            try:
                est = _draw_estimate(cfg, method, model, n, spec, chan, samples,
                                     _seed(cfg, *base, _NOISE))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    res = glasso_solve(est, _solver_config(cfg, lams[method]))
            except MacGgmError as exc:
                row.update(status=f"error: {exc}")
                rows.append(row)
                continue
            rep = score(model, res)
            row.update(
                tpr=rep.tpr, fpr=rep.fpr, exact=int(rep.exact_recovery),
                sign_consistent=int(rep.sign_consistent), sweeps=res.sweeps_used,
                converged=int(res.converged), clamps=est.clamps,
                status="ok" if res.converged else "not_converged",
            )
            rows.append(row)
    return rows


def _unit_job(args):
    cfg, point_idx, point, repeat = args
    t0 = time.perf_counter()
    rows = _run_unit(cfg, point_idx, point, repeat)
    return point_idx, repeat, rows, time.perf_counter() - t0


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# macggm-results schema={SCHEMA_VERSION} config={self.config.config_hash}\n")
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in CSV_COLUMNS})
        return buf.getvalue()

    def summary(self) -> list[dict]:
        """Means over repeats and trials per (method, grid point)."""
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            groups.setdefault((row["method"], row["d"], row["n"], row["snr"]), []).append(row)
        out = []
        for (method, d, n, snr), rows in groups.items():
            ok = [r for r in rows if "tpr" in r]
            mean = lambda key: float(np.mean([r[key] for r in ok])) if ok else math.nan  # noqa: E731
            out.append({
                "method": method, "d": d, "n": n, "snr": snr, "runs": len(rows),
                "failed": len(rows) - len(ok), "tpr": mean("tpr"), "fpr": mean("fpr"),
                "exact": mean("exact"), "sign_consistent": mean("sign_consistent"),
                "lambda": float(np.mean([r["lambda"] for r in rows])),
            })
        return out

    def summary_table(self) -> str:
        cols = ("method", "d", "n", "snr", "runs", "failed", "tpr", "fpr", "exact",
                "sign_consistent", "lambda")
        body = [[_fmt(r[c], 4) for c in cols] for r in self.summary()]
        widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c)
                  for i, c in enumerate(cols)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
        lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
        return "\n".join(lines)


def _fmt(v, digits: int = 10) -> str:
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 1e16:
            return str(int(v))
        return f"{v:.{digits}g}"
    return str(v)


def run_experiment(cfg: ExperimentConfig, *, workers: int | None = None,
                   csv_path: str | Path | None = None) -> ExperimentResult:
    """Run every grid point, graph repeat and trial of ``cfg``.

    Raises ``ConfigError`` before doing any work if the config has
    violations (warnings aside). Per-trial failures are recorded in the
    ``status`` column and never abort the sweep.
    """
    problems = [p for p in validate_config(cfg) if not p.startswith("warning")]
    if problems:
        raise ConfigError("; ".join(problems))
    workers = workers or default_workers()
    jobs = [(cfg, i, point, r) for i, point in enumerate(_grid_points(cfg))
            for r in range(cfg.graph_repeats)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_unit_job, jobs))
    else:
        results = [_unit_job(job) for job in jobs]
    results.sort(key=lambda item: (item[0], item[1]))
    wall: dict[int, float] = {}
    rows = []
    for point_idx, _, unit_rows, seconds in results:
        wall[point_idx] = wall.get(point_idx, 0.0) + seconds
        rows.extend(unit_rows)
    for point_idx, seconds in sorted(wall.items()):
        logger.info("grid point %d: %.2fs", point_idx, seconds)
    result = ExperimentResult(cfg, rows)
    if csv_path is not None:
        Path(csv_path).write_text(result.csv_text())
    return result
