"""Command-line entry point: ``macggm <subcommand>``."""

from __future__ import annotations

import dataclasses
import logging
import math
import sys
from pathlib import Path

import click

from . import matrix_io
from .channel import ChannelSpec, build_real_block
from .errors import MacGgmError
from .estimators import lemma2_constant
from .harness import default_workers, load_config, run_experiment, validate_config
from .metrics import theorem_bounds
from .model import compute_constants, generate_random_model, generate_star_model
from .solver import SolverConfig, glasso_solve


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Graph structure learning over a Gaussian multiple-access channel."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("gen-model")
@click.option("--type", "kind", type=click.Choice(["random", "star"]), default="random")
@click.option("-d", "--dim", "d", type=int, default=20, show_default=True)
@click.option("--edge-prob", type=float, default=0.1, show_default=True)
@click.option("--max-degree", type=int, default=5, show_default=True)
@click.option("--rho", type=float, default=0.25, show_default=True, help="Star hub-leaf correlation.")
@click.option("--seed", type=int, default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Write the model here instead of stdout.")
def gen_model(kind, d, edge_prob, max_degree, rho, seed, output):
    """Draw a ground-truth model and write it in the matrix text format."""
    try:
        if kind == "star":
            model = generate_star_model(d, rho)
        else:
            model = generate_random_model(d, edge_prob, max_degree, seed=seed)
    except (MacGgmError, ValueError) as exc:
        _fail(str(exc))
    text = matrix_io.model_to_text(model)
    if output:
        matrix_io.save(output, text)
        click.echo(f"wrote {output}: d={model.d}, edges={len(model.edges)}, "
                   f"max degree={model.max_degree}", err=True)
    else:
        click.echo(text, nl=False)


@main.command("validate")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def validate(config):
    """Check an experiment config; exit status 1 on any violation."""
    try:
        cfg = load_config(config)
    except MacGgmError as exc:
        _fail(str(exc))
    problems = validate_config(cfg)
    errors = [p for p in problems if not p.startswith("warning")]
    for p in problems:
        click.echo(p)
    if errors:
        sys.exit(1)
    if not problems:
        click.echo("ok")


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="CSV path (default: <config stem>.csv next to the config).")
@click.option("-j", "--workers", type=int, default=None,
              help="Worker processes (default: $MACGGM_WORKERS or 1).")
def run(config, output, workers):
    """Run an experiment and print its summary table."""
    try:
        cfg = load_config(config)
        out = output or str(Path(config).with_suffix(".csv"))
        result = run_experiment(cfg, workers=workers or default_workers(), csv_path=out)
    except MacGgmError as exc:
        _fail(str(exc))
    click.echo(result.summary_table())
    click.echo(f"wrote {len(result.rows)} rows to {out}", err=True)


@main.command("bounds")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--snr", type=float, default=3.0, show_default=True)
@click.option("--gains", type=click.Choice(["identity", "rayleigh"]), default="identity")
@click.option("--seed", type=int, default=None, help="Seed for Rayleigh gains.")
@click.option("--eps", type=float, default=None, help="Failure level (default 0.5/d^2).")
def bounds(model_file, snr, gains, seed, eps):
    """Print model constants and the sufficient sample sizes."""
    try:
        model = matrix_io.model_from_text(Path(model_file).read_text())
        consts = compute_constants(model)
        spec = (ChannelSpec.identity(model.d, snr) if gains == "identity"
                else ChannelSpec.rayleigh(model.d, snr, seed))
        c = lemma2_constant(build_real_block(spec))
        eps = eps if eps is not None else 0.5 / model.d ** 2
        tb = theorem_bounds(consts, model, c, eps)
    except (MacGgmError, ValueError) as exc:
        _fail(str(exc))
    rows = [
        ("d", model.d), ("max_degree", model.max_degree), ("theta_min", model.theta_min),
        ("alpha", consts.alpha), ("kappa_sigma", consts.kappa_sigma),
        ("kappa_gamma", consts.kappa_gamma), ("chan_c", c), ("eps", eps),
    ]
    rows += [(f.name, getattr(tb, f.name)) for f in dataclasses.fields(tb)]
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        click.echo(f"{key.ljust(width)}  {value:.6g}" if isinstance(value, float)
                   else f"{key.ljust(width)}  {value}")
    if not tb.consistent:
        click.echo("note: a part (b) threshold is below its part (a) counterpart", err=True)


@main.command("solve")
@click.argument("matrix_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--lam", "lam", type=float, required=True, help="Regularization weight.")
@click.option("--max-sweeps", type=int, default=200, show_default=True)
@click.option("--duality-tol", type=float, default=1e-5, show_default=True)
@click.option("--inner-tol", type=float, default=1e-7, show_default=True)
@click.option("--edge-threshold", type=float, default=1e-8, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Write the estimated precision matrix here.")
def solve(matrix_file, lam, max_sweeps, duality_tol, inner_tol, edge_threshold, output):
    """Run the graphical lasso on a covariance matrix file."""
    try:
        s = matrix_io.read_any_covariance(matrix_file)
        cfg = SolverConfig(lam=lam, max_sweeps=max_sweeps, duality_tol=duality_tol,
                           inner_tol=inner_tol, edge_threshold=edge_threshold)
        res = glasso_solve(s, cfg)
    except (MacGgmError, ValueError) as exc:
        _fail(str(exc))
    meta = {"kind": "solution", "lambda": f"{lam:.17g}", "converged": res.converged,
            "sweeps": res.sweeps_used, "edges": len(res.edges)}
    text = matrix_io.dumps({"precision": res.theta_hat, "covariance": res.sigma_hat}, meta)
    if output:
        matrix_io.save(output, text)
    else:
        click.echo(text, nl=False)
    status = "converged" if res.converged else "NOT converged"
    final = res.objective_trace[-1] if res.objective_trace else math.nan
    click.echo(f"{status} after {res.sweeps_used} sweeps, objective {final:.10g}, "
               f"{len(res.edges)} edges", err=True)
    for j, k in sorted(res.edges):
        click.echo(f"  {j} {k} {res.theta_hat[j, k]:+.6g}", err=True)


if __name__ == "__main__":
    main()
