"""Experiment pipeline: trajectory CSVs and stepsize / tolerance sweeps.

CSV files start with a ``# <schema> v<version>`` comment line followed by a
``# status: ...`` line and a header row. Floats are written with ``repr`` so
identical runs produce identical bytes, except for the timing columns.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .initializer import InitializationError, solve_fixed
from .problem import TVProblem, make_maxcut_tv, make_synthetic_tv
from .tracker import TrackerConfig, Trajectory, track

TRAJECTORY_SCHEMA = "tvsdp-trajectory v1"
SWEEP_SCHEMA = "tvsdp-sweep v1"
SUMMARY_SCHEMA = "tvsdp-sweep-summary v1"

TRAJECTORY_COLUMNS = ["t", "residual", "dt_used", "retries", "sigma_r", "wall_ms"]
SWEEP_COLUMNS = ["seed", "mode", "value", "status", "steps", "retries", "mean_residual",
                 "max_residual", "final_rank", "wall_s"]
SUMMARY_COLUMNS = ["mode", "value", "metric", "count", "min", "q1", "median", "q3", "max"]
TIMING_COLUMNS = {"wall_ms", "wall_s"}


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, schema: str, status: str, columns: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(f"# {schema}\n# status: {status}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path, schema: str | None = None) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Read a CSV written by this module; returns ``(meta, rows)``.

    Raises ``ValueError`` when the schema line does not match ``schema``.
    """
    lines = Path(path).read_text().splitlines()
    if len(lines) < 3 or not lines[0].startswith("# ") or not lines[1].startswith("# status: "):
        raise ValueError(f"{path}: missing schema header")
    meta = {"schema": lines[0][2:], "status": lines[1][len("# status: "):]}
    if schema is not None and meta["schema"] != schema:
        raise ValueError(f"{path}: schema {meta['schema']!r}, expected {schema!r}")
    rows = list(csv.DictReader(lines[2:]))
    return meta, rows


def trajectory_rows(traj: Trajectory) -> list[dict]:
    return [
        {
            "t": rec.t,
            "residual": rec.residual,
            "dt_used": rec.dt_used,
            "retries": rec.retries,
            "sigma_r": rec.sigma_r,
            "wall_ms": rec.wall_time * 1e3,
        }
        for rec in traj.records
    ]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    status = "completed" if traj.completed else f"aborted: {traj.message}"
    _write_csv(path, TRAJECTORY_SCHEMA, status, TRAJECTORY_COLUMNS, trajectory_rows(traj))


@dataclass(frozen=True)
class SweepSpec:
    """Instance family and tracker settings shared by all cells of a sweep."""

    kind: str = "maxcut"
    n: int = 30
    density: float = 0.5
    r: int = 2
    m: int = 5
    mode: str = "dt"  # "dt": fixed stepsizes; "eps": tuning with residual tolerances
    dt0: float = 1e-2
    gamma1: float = 0.5
    gamma2: float = 1.2
    max_retries: int = 60

    def instance(self, seed: int) -> TVProblem:
        if self.kind == "maxcut":
            return make_maxcut_tv(self.n, self.density, seed)
        if self.kind == "synthetic":
            return make_synthetic_tv(self.n, self.r, self.m, seed)
        raise ValueError(f"unknown instance kind {self.kind!r}")

    def config(self, value: float) -> TrackerConfig:
        if self.mode == "dt":
            return TrackerConfig(dt0=value, tuning=False, max_retries=self.max_retries)
        if self.mode == "eps":
            return TrackerConfig(dt0=self.dt0, tuning=True, eps=value, gamma1=self.gamma1,
                                 gamma2=self.gamma2, max_retries=self.max_retries)
        raise ValueError(f"unknown sweep mode {self.mode!r}")


def _run_seed(spec: SweepSpec, seed: int, values: tuple[float, ...]) -> list[dict]:
    problem = spec.instance(seed)
    base = {"seed": seed, "mode": spec.mode}
    try:
        init = solve_fixed(problem)
    except InitializationError as exc:
        return [base | {"value": v, "status": f"init-failed: {exc}", "steps": 0, "retries": 0,
                        "mean_residual": math.nan, "max_residual": math.nan, "final_rank": 0,
                        "wall_s": 0.0} for v in values]
    rows = []
    for v in values:
        traj = track(problem, init.Y0, init.lambda0, spec.config(v))
        res = traj.residuals[1:]
        rows.append(base | {
            "value": float(v),
            "status": "ok" if traj.completed else "aborted",
            "steps": traj.steps,
            "retries": traj.total_retries,
            "mean_residual": traj.mean_residual(),
            "max_residual": float(res.max()) if res.size else math.nan,
            "final_rank": int(traj.records[-1].Y.shape[1]),
            "wall_s": float(sum(rec.wall_time for rec in traj.records)),
        })
    return rows


def run_sweep(spec: SweepSpec, seeds, values, jobs: int = 1) -> list[dict]:
    """Run every (seed, value) cell; rows come back in (seed, value) input order.

    Each seed is initialized once and reused for all values. Failed cells are
    reported with a non-``ok`` status instead of stopping the sweep.
    """
    seeds = [int(s) for s in seeds]
    values = tuple(float(v) for v in values)
    if not values:
        return []
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_seed, [spec] * len(seeds), seeds, [values] * len(seeds)))
    else:
        chunks = [_run_seed(spec, s, values) for s in seeds]
    return [row for chunk in chunks for row in chunk]


def summarize(rows: list[dict]) -> list[dict]:
    """Quartiles of mean residual and wall time per parameter value (no outlier removal)."""
    out = []
    keys = []
    for row in rows:
        key = (row["mode"], row["value"])
        if key not in keys:
            keys.append(key)
    for mode, value in keys:
        cell = [r for r in rows if r["mode"] == mode and r["value"] == value and r["status"] == "ok"]
        for metric in ("mean_residual", "wall_s"):
            data = np.array([r[metric] for r in cell], dtype=float)
            q = np.quantile(data, [0.0, 0.25, 0.5, 0.75, 1.0]) if data.size else [math.nan] * 5
            out.append({"mode": mode, "value": value, "metric": metric, "count": int(data.size),
                        "min": float(q[0]), "q1": float(q[1]), "median": float(q[2]),
                        "q3": float(q[3]), "max": float(q[4])})
    return out


def write_sweep_csv(rows: list[dict], path, summary_path=None, spec: SweepSpec | None = None) -> None:
    failed = sum(1 for r in rows if r["status"] != "ok")
    status = "completed" if not failed else f"completed with {failed} failed cells"
    if spec is not None:
        status += " " + " ".join(f"{k}={v}" for k, v in asdict(spec).items())
    _write_csv(path, SWEEP_SCHEMA, status, SWEEP_COLUMNS, rows)
    if summary_path is not None:
        _write_csv(summary_path, SUMMARY_SCHEMA, status, SUMMARY_COLUMNS, summarize(rows))
