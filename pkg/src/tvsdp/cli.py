"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (initialization
failed or tracking aborted).
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .experiments import SweepSpec, run_sweep, write_sweep_csv, write_trajectory_csv
from .initializer import InitializationError, solve_fixed
from .problem import SyntheticTVProblem, load_problem, make_maxcut_tv, make_synthetic_tv, save_problem
from .tracker import TrackerConfig, check_step_conditions, track

EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _floats(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from exc


def _load(path: str):
    try:
        return load_problem(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read instance {path}: {exc}", err=True)
        sys.exit(EXIT_INVALID)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Track solution paths of time-varying SDPs with low-rank factorizations."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--kind", type=click.Choice(["maxcut", "synthetic"]), default="maxcut", show_default=True)
@click.option("--n", "n", type=click.IntRange(min=2), default=30, show_default=True)
@click.option("--density", type=float, default=0.5, show_default=True, help="Edge density (maxcut).")
@click.option("--r", "r", type=click.IntRange(min=1), default=2, show_default=True, help="Rank (synthetic).")
@click.option("--m", "m", type=click.IntRange(min=1), default=5, show_default=True, help="Constraints (synthetic).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True)
def generate(kind, n, density, r, m, seed, out):
    """Write a generated instance as JSON."""
    try:
        if kind == "maxcut":
            problem = make_maxcut_tv(n, density, seed)
        else:
            problem = make_synthetic_tv(n, r, m, seed)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    save_problem(problem, out)
    click.echo(f"wrote {kind} instance n={problem.n} m={problem.m} to {out}")


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "t", type=float, default=0.0, show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="Write the initial point as JSON.")
def init(instance, t, tol, out):
    """Solve the instance at a fixed time and report the detected rank."""
    problem = _load(instance)
    try:
        res = solve_fixed(problem, t, tol)
    except InitializationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"rank={res.r} residual={res.residual0:.3e} ipm_iterations={res.iterations} "
               f"newton_iterations={res.newton_iterations}")
    if out:
        payload = {"t": t, "r": res.r, "residual": res.residual0,
                   "Y0": res.Y0.tolist(), "lambda0": res.lambda0.tolist()}
        Path(out).write_text(json.dumps(payload, sort_keys=True) + "\n")


@main.command(name="track")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--dt", type=float, default=1e-2, show_default=True, help="Initial stepsize.")
@click.option("--tuning/--no-tuning", default=False, show_default=True)
@click.option("--gamma1", type=float, default=0.5, show_default=True)
@click.option("--gamma2", type=float, default=1.2, show_default=True)
@click.option("--eps", type=float, default=1e-4, show_default=True)
@click.option("--max-retries", type=int, default=60, show_default=True)
@click.option("--init", "init_mode", type=click.Choice(["solve", "exact"]), default="solve", show_default=True,
              help="'exact' starts from the stored solution of a synthetic instance.")
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True)
def track_cmd(instance, dt, tuning, gamma1, gamma2, eps, max_retries, init_mode, out):
    """Initialize and track an instance over its horizon, writing a trajectory CSV."""
    problem = _load(instance)
    try:
        config = TrackerConfig(dt0=dt, tuning=tuning, gamma1=gamma1, gamma2=gamma2, eps=eps,
                               max_retries=max_retries)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    if init_mode == "exact":
        if not isinstance(problem, SyntheticTVProblem):
            raise click.BadParameter("--init exact needs a synthetic instance")
        Y0, lam0 = problem.solution(0.0)
    else:
        try:
            res = solve_fixed(problem, 0.0)
        except InitializationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        Y0, lam0 = res.Y0, res.lambda0
    traj = track(problem, Y0, lam0, config)
    write_trajectory_csv(traj, out)
    click.echo(f"steps={traj.steps} retries={traj.total_retries} "
               f"mean_residual={traj.mean_residual():.3e} completed={traj.completed}")
    if not traj.completed:
        click.echo(f"error: {traj.message}", err=True)
        sys.exit(EXIT_NUMERICAL)


@main.command()
@click.option("--kind", type=click.Choice(["maxcut", "synthetic"]), default="maxcut", show_default=True)
@click.option("--n", "n", type=click.IntRange(min=2), default=30, show_default=True)
@click.option("--density", type=float, default=0.5, show_default=True)
@click.option("--r", "r", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--m", "m", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--seeds", default="0,1,2,3,4", show_default=True, help="Comma-separated instance seeds.")
@click.option("--stepsizes", default="1e-1,1e-2,1e-3,1e-4", show_default=True,
              help="Fixed stepsizes (no tuning); ignored when --eps-list is given.")
@click.option("--eps-list", default=None, help="Residual tolerances; runs with stepsize tuning.")
@click.option("--dt0", type=float, default=1e-2, show_default=True, help="Initial stepsize with tuning.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True)
@click.option("--summary", "summary", type=click.Path(dir_okay=False), default=None,
              help="Quartile summary CSV (default: <out stem>_summary.csv).")
def sweep(kind, n, density, r, m, seeds, stepsizes, eps_list, dt0, jobs, out, summary):
    """Run a grid of seeds x stepsizes (or tolerances) and write per-cell rows and quartiles."""
    seed_list = _ints(seeds)
    if eps_list is not None:
        mode, values = "eps", _floats(eps_list)
    else:
        mode, values = "dt", _floats(stepsizes)
    if any(v <= 0 for v in values):
        raise click.BadParameter("stepsizes and tolerances must be positive")
    spec = SweepSpec(kind=kind, n=n, density=density, r=r, m=m, mode=mode, dt0=dt0)
    rows = run_sweep(spec, seed_list, values, jobs=jobs)
    out_path = Path(out)
    summary_path = Path(summary) if summary else out_path.with_name(out_path.stem + "_summary.csv")
    write_sweep_csv(rows, out_path, summary_path, spec)
    failed = sum(1 for row in rows if row["status"] != "ok")
    click.echo(f"{len(rows)} cells, {failed} failed; wrote {out_path} and {summary_path}")


@main.command()
@click.option("--delta", type=float, required=True)
@click.option("--dt", type=float, required=True)
@click.option("--lambda-star", "lambda_star", type=float, required=True, help="Lower bound on lambda_r(X_t).")
@click.option("--Lambda-star", "Lambda_star", type=float, required=True, help="Upper bound on lambda_1(X_t).")
@click.option("--L", "L", type=float, required=True, help="Bound on ||dX_t/dt||_F.")
@click.option("--K", "K", type=float, required=True, help="Bound on ||dlambda_t/dt||.")
@click.option("--m", "m", type=float, required=True, help="Inverse bound of the KKT operator.")
@click.option("--M", "M", type=float, required=True, help="Lipschitz constant of the KKT operator.")
@click.option("--r", "r", type=click.IntRange(min=1), required=True)
@click.option("--lambda0-error", type=float, default=None)
@click.option("--X0-error", "X0_error", type=float, default=None)
def conditions(delta, dt, lambda_star, Lambda_star, L, K, m, M, r, lambda0_error, X0_error):
    """Evaluate the sufficient step and initialization conditions; prints JSON."""
    try:
        rep = check_step_conditions(delta, dt, lambda_star, Lambda_star, L, K, m, M, r,
                                    lambda0_error=lambda0_error, X0_error=X0_error)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    payload = asdict(rep) | {"ok": rep.ok, "primal_error_bound": rep.primal_error_bound}
    click.echo(json.dumps(payload, indent=1, default=lambda x: x.item() if isinstance(x, np.generic) else str(x)))


if __name__ == "__main__":
    main()
