import hashlib
import json
import timeit

import numpy as np
import pytest
from click.testing import CliRunner

from tvsdp import kkt
from tvsdp.cli import main
from tvsdp.experiments import (
    SUMMARY_SCHEMA,
    SWEEP_COLUMNS,
    SWEEP_SCHEMA,
    TRAJECTORY_COLUMNS,
    TRAJECTORY_SCHEMA,
    SweepSpec,
    read_csv,
    run_sweep,
    summarize,
)
from tvsdp.initializer import solve_fixed
from tvsdp.problem import (
    AffineTVProblem,
    LinearOperatorA,
    dumps_problem,
    load_problem,
    make_maxcut_tv,
    save_problem,
)
from tvsdp.tracker import TrackerConfig, track


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_generate_roundtrip(runner, tmp_path):
    out = tmp_path / "mc.json"
    res = invoke(runner, "generate", "--kind", "maxcut", "--n", 100, "--density", 0.5, "--seed", 7, "--out", out)
    assert res.exit_code == 0
    q = load_problem(out)
    p = make_maxcut_tv(100, 0.5, 7)
    assert np.array_equal(p.C0, q.C0) and np.array_equal(p.C1, q.C1)
    assert dumps_problem(q) == out.read_text()


def test_generate_synthetic_carries_truth(runner, tmp_path):
    out = tmp_path / "s.json"
    invoke(runner, "generate", "--kind", "synthetic", "--n", 8, "--r", 2, "--m", 5, "--seed", 1, "--out", out)
    d = json.loads(out.read_text())
    assert d["kind"] == "synthetic" and np.array(d["ground_truth"]["Y0"]).shape == (8, 2)


def test_generate_byte_identical(runner, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        invoke(runner, "generate", "--n", 30, "--seed", 4, "--out", out)
    assert sha(a) == sha(b)


def test_generate_invalid(runner, tmp_path):
    res = runner.invoke(main, ["generate", "--density", "0", "--out", str(tmp_path / "x.json")])
    assert res.exit_code == 2
    res = runner.invoke(main, ["generate", "--kind", "synthetic", "--r", "4", "--m", "3",
                               "--out", str(tmp_path / "x.json")])
    assert res.exit_code == 2


def test_init_command(runner, tmp_path):
    inst, out = tmp_path / "p.json", tmp_path / "init.json"
    save_problem(make_maxcut_tv(20, 0.5, 0), inst)
    res = invoke(runner, "init", inst, "--out", out)
    assert res.exit_code == 0 and "rank=" in res.output
    d = json.loads(out.read_text())
    assert d["residual"] <= 1e-9 and np.array(d["Y0"]).shape == (20, d["r"])


def test_track_synthetic(runner, tmp_path):
    inst, out = tmp_path / "s.json", tmp_path / "traj.csv"
    invoke(runner, "generate", "--kind", "synthetic", "--n", 8, "--seed", 0, "--out", inst)
    res = invoke(runner, "track", inst, "--dt", 1e-3, "--out", out)
    assert res.exit_code == 0
    meta, rows = read_csv(out, TRAJECTORY_SCHEMA)
    assert meta["status"] == "completed"
    assert list(rows[0]) == TRAJECTORY_COLUMNS and len(rows) == 1001
    assert max(float(r["residual"]) for r in rows) <= 1e-6


def test_track_tuning(runner, tmp_path):
    inst, out = tmp_path / "s.json", tmp_path / "traj.csv"
    invoke(runner, "generate", "--kind", "synthetic", "--n", 8, "--seed", 2, "--out", inst)
    res = invoke(runner, "track", inst, "--tuning", "--eps", 1e-4, "--dt", 0.5, "--init", "exact", "--out", out)
    assert res.exit_code == 0
    _, rows = read_csv(out, TRAJECTORY_SCHEMA)
    assert all(float(r["residual"]) <= 1e-4 for r in rows[1:])
    assert float(rows[-1]["t"]) == 1.0


def test_track_stationary(runner, tmp_path):
    p = make_maxcut_tv(12, 0.5, 3)
    still = AffineTVProblem(p.C0, np.zeros_like(p.C0), p.A, p.b0, p.b1)
    inst, out = tmp_path / "still.json", tmp_path / "traj.csv"
    save_problem(still, inst)
    assert invoke(runner, "track", inst, "--dt", 0.1, "--out", out).exit_code == 0
    _, rows = read_csv(out, TRAJECTORY_SCHEMA)
    res = np.array([float(r["residual"]) for r in rows])
    assert np.ptp(res) <= 1e-9


def test_track_abort_writes_partial_csv(runner, tmp_path, monkeypatch):
    inst, out = tmp_path / "s.json", tmp_path / "traj.csv"
    invoke(runner, "generate", "--kind", "synthetic", "--n", 8, "--out", inst)

    def broken(*args, **kwargs):
        raise kkt.SingularSystemError("forced", 0.0)

    monkeypatch.setattr(kkt, "solve_step", broken)
    res = runner.invoke(main, ["track", str(inst), "--init", "exact", "--out", str(out)])
    assert res.exit_code == 3
    meta, rows = read_csv(out, TRAJECTORY_SCHEMA)
    assert meta["status"].startswith("aborted") and len(rows) == 1


def test_track_invalid_inputs(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert runner.invoke(main, ["track", str(bad), "--out", str(tmp_path / "x.csv")]).exit_code == 2
    assert runner.invoke(main, ["track", str(tmp_path / "missing.json"), "--out", "x.csv"]).exit_code == 2
    inst = tmp_path / "p.json"
    save_problem(make_maxcut_tv(6, 0.5, 0), inst)
    assert runner.invoke(main, ["track", str(inst), "--dt", "-1", "--out", "x.csv"]).exit_code == 2
    assert runner.invoke(main, ["track", str(inst), "--init", "exact", "--out", "x.csv"]).exit_code == 2


def test_track_init_failure(runner, tmp_path):
    inst = tmp_path / "infeasible.json"
    save_problem(AffineTVProblem(np.eye(3), np.zeros((3, 3)), LinearOperatorA(np.eye(3)[None]), -np.ones(1), np.zeros(1)), inst)
    res = runner.invoke(main, ["track", str(inst), "--out", str(tmp_path / "x.csv")])
    assert res.exit_code == 3


def test_conditions_command(runner):
    res = invoke(runner, "conditions", "--delta", 1e-9, "--dt", 1e-9, "--lambda-star", 1, "--Lambda-star", 2,
                 "--L", 1, "--K", 1, "--m", 1, "--M", 1, "--r", 2)
    d = json.loads(res.output)
    assert d["ok"] and d["cond1"] and d["cond2"] and d["cond3"]
    res = runner.invoke(main, ["conditions", "--delta", "1", "--dt", "1", "--lambda-star", "0", "--Lambda-star", "1",
                               "--L", "1", "--K", "1", "--m", "1", "--M", "1", "--r", "1"])
    assert res.exit_code == 2


def test_sweep_empty_stepsizes(runner, tmp_path):
    out = tmp_path / "sweep.csv"
    res = invoke(runner, "sweep", "--n", 10, "--seeds", "0,1", "--stepsizes", "", "--out", out)
    assert res.exit_code == 0
    meta, rows = read_csv(out, SWEEP_SCHEMA)
    assert rows == []
    assert out.read_text().splitlines()[2] == ",".join(SWEEP_COLUMNS)


def test_sweep_outputs(runner, tmp_path):
    out = tmp_path / "sweep.csv"
    res = invoke(runner, "sweep", "--n", 12, "--seeds", "0,1", "--stepsizes", "0.1,0.01", "--out", out)
    assert res.exit_code == 0
    _, rows = read_csv(out, SWEEP_SCHEMA)
    assert [(r["seed"], float(r["value"])) for r in rows] == [("0", 0.1), ("0", 0.01), ("1", 0.1), ("1", 0.01)]
    assert all(r["status"] == "ok" for r in rows)
    _, summary = read_csv(tmp_path / "sweep_summary.csv", SUMMARY_SCHEMA)
    assert {r["metric"] for r in summary} == {"mean_residual", "wall_s"}
    assert all(r["count"] == "2" for r in summary)
    with pytest.raises(ValueError):
        read_csv(out, TRAJECTORY_SCHEMA)


def test_sweep_eps_mode(runner, tmp_path):
    out = tmp_path / "eps.csv"
    invoke(runner, "sweep", "--n", 12, "--seeds", "0", "--eps-list", "1e-2,1e-4", "--out", out)
    _, rows = read_csv(out, SWEEP_SCHEMA)
    assert [r["mode"] for r in rows] == ["eps", "eps"]
    assert all(float(r["max_residual"]) <= float(r["value"]) for r in rows)


def test_sweep_bad_values(runner, tmp_path):
    res = runner.invoke(main, ["sweep", "--stepsizes", "0.1,abc", "--out", str(tmp_path / "x.csv")])
    assert res.exit_code == 2
    res = runner.invoke(main, ["sweep", "--stepsizes", "0.1,-1", "--out", str(tmp_path / "x.csv")])
    assert res.exit_code == 2


def test_sweep_parallel_matches_serial():
    spec = SweepSpec(n=10)
    a = run_sweep(spec, [0, 1, 2], [0.1, 0.05], jobs=1)
    b = run_sweep(spec, [0, 1, 2], [0.1, 0.05], jobs=2)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_s"} for r in rows]  # noqa: E731
    assert strip(a) == strip(b)


def test_summary_quartiles():
    rows = [{"mode": "dt", "value": 0.1, "status": "ok", "mean_residual": float(v), "wall_s": 1.0}
            for v in (1, 2, 3, 4, 5)]
    rows.append({"mode": "dt", "value": 0.1, "status": "aborted", "mean_residual": 100.0, "wall_s": 1.0})
    s = summarize(rows)[0]
    assert (s["count"], s["min"], s["q1"], s["median"], s["q3"], s["max"]) == (5, 1.0, 2.0, 3.0, 4.0, 5.0)


def test_wall_time_scaling():
    """Per-step time grows like a dense solve: log-log slope in n between 2 and 3.

    A single step at n=20 takes a fraction of a millisecond, so each size is
    timed as the best of repeated solves rather than from one tracker record.
    """
    ns = [20, 40, 80]
    times = []
    for n in ns:
        p = make_maxcut_tv(n, 0.5, 0)
        init = solve_fixed(p)
        step = lambda: kkt.solve_step(p, 0.02, init.Y0, init.lambda0)  # noqa: E731
        times.append(min(timeit.repeat(step, number=5, repeat=15)) / 5)
    slope = np.polyfit(np.log(ns), np.log(times), 1)[0]
    assert 2.0 <= slope <= 3.0, f"slope {slope:.2f}"
