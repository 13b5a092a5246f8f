import json
import subprocess
import sys

import numpy as np
import pytest

from gscioc.cli import main
from gscioc.core import AgentDynamics, DynamicsModel, JointState
from gscioc.rewards import StateQuadratic, ActionQuadratic, WeightedTerm
from gscioc.scenarios import ScenarioConfig, dump_scenario

MANIFEST_KEYS = {"command", "scenario", "seed", "overrides", "output_dir", "version", "duration_s", "outputs", "extra"}


def run(*argv):
    return main([str(a) for a in argv])


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


@pytest.fixture
def small_rollout(tmp_path):
    out = tmp_path / "r"
    assert run("rollout", "group_goal", "--out", out, "-n", 40, "--seed", 3) == 0
    return out


def test_solve_writes_policy(tmp_path):
    assert run("solve", "group_goal", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "policy.json").read_text())
    assert (doc["format"], doc["version"], doc["solver"]) == ("gscioc-policy", 1, "gs-cioc")
    for agent in ("i", "j"):
        stages = doc["policies"][agent]["stages"]
        assert len(stages) == 14
        assert set(stages[0]) == {"t", "nu", "gain", "covariance", "Pi", "Omega"}
    m = manifest(tmp_path)
    assert set(m) == MANIFEST_KEYS and m["outputs"] == ["policy.json"]


def test_solve_joint_and_single(tmp_path):
    assert run("solve", "group_goal", "--solver", "m-cioc", "--out", tmp_path / "m") == 0
    assert "joint" in json.loads((tmp_path / "m" / "policy.json").read_text())["policies"]
    assert run("solve", "group_goal_heterogeneous", "--solver", "single-agent", "--out", tmp_path / "s") == 0
    assert run("solve", "group_goal_heterogeneous", "--solver", "m-cioc", "--out", tmp_path / "x") == 2


def test_solve_iterative_records_log(tmp_path):
    assert run("solve", "zebra", "--solver", "iterative", "--out", tmp_path) == 0
    extra = manifest(tmp_path)["extra"]
    assert extra["converged"] and extra["iterations"] >= 1 and extra["final_delta"] < 1e-6
    assert "log" in json.loads((tmp_path / "policy.json").read_text())["solver_info"]


def test_zero_reward_exits_3(tmp_path, capsys):
    assert run("solve", "group_goal", "--theta", "0,0,0", "--out", tmp_path) == 3
    assert "NonPositiveDefinitePrecision" in capsys.readouterr().err


def test_bad_theta_exits_2(tmp_path):
    assert run("solve", "group_goal", "--theta", "1,2", "--out", tmp_path) == 2
    assert run("solve", "group_goal", "--theta", "a,b,c", "--out", tmp_path) == 2
    assert run("solve", tmp_path / "missing.json", "--out", tmp_path) == 2


def test_rollout_outputs_and_determinism(tmp_path, small_rollout):
    lines = (small_rollout / "rollouts.csv").read_text().splitlines()
    assert lines[0] == "# gscioc-rollout v1 seed=3 provenance=GS-CIOC dims=2,2,2,2"
    assert lines[1] == "traj_id,t,agent,s0,s1,a0,a1"
    stats = json.loads((small_rollout / "stats.json").read_text())
    assert {"correlation", "total_variance", "std_actions", "correlation_per_t"} <= set(stats)
    assert manifest(small_rollout)["seed"] == 3
    again = tmp_path / "again"
    assert run("rollout", "group_goal", "--out", again, "-n", 40, "--seed", 3) == 0
    assert (again / "rollouts.csv").read_bytes() == (small_rollout / "rollouts.csv").read_bytes()


def test_rollout_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GSCIOC_SEED", "17")
    assert run("rollout", "group_goal", "--out", tmp_path, "-n", 2) == 0
    assert manifest(tmp_path)["seed"] == 17
    monkeypatch.setenv("GSCIOC_SEED", "x")
    assert run("rollout", "group_goal", "--out", tmp_path, "-n", 2) == 2


def test_rollout_single_trajectory_note(tmp_path):
    assert run("rollout", "group_goal", "--out", tmp_path, "-n", 1) == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert "InsufficientSamples" in stats["note"] or "statistics omitted" in stats["note"]
    assert (tmp_path / "rollouts.csv").exists()
    assert run("rollout", "group_goal", "--out", tmp_path, "-n", 0) == 2


def test_rollout_from_policy_file(tmp_path):
    assert run("solve", "group_goal", "--out", tmp_path / "p") == 0
    assert run("rollout", "group_goal", "--policy", tmp_path / "p" / "policy.json", "--out", tmp_path / "a", "-n", 5) == 0
    assert run("rollout", "group_goal", "--out", tmp_path / "b", "-n", 5) == 0
    a = (tmp_path / "a" / "rollouts.csv").read_text().splitlines()[1:]
    b = (tmp_path / "b" / "rollouts.csv").read_text().splitlines()[1:]
    assert a == b


def test_infer_pipeline_records_theta0(tmp_path, small_rollout):
    out = tmp_path / "inf"
    csv = small_rollout / "rollouts.csv"
    assert run("infer", csv, "group_goal", "--theta0", "0.5,0.5,0.5", "--max-iterations", 5, "--out", out) == 0
    doc = json.loads((out / "theta.json").read_text())
    assert doc["iterations"] == 5 and doc["seed"] == 3 and len(doc["theta"]) == 3
    assert manifest(out)["overrides"]["theta0"] == [0.5, 0.5, 0.5]
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,objective,step,theta0,theta1,theta2" and len(trace) == 7


def test_infer_rejects_empty_csv(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("infer", empty, "group_goal", "--out", tmp_path) == 2
    assert run("infer", tmp_path / "nope.csv", "group_goal", "--out", tmp_path) == 2


def test_stats_and_reference(tmp_path, small_rollout):
    out = tmp_path / "s.json"
    csv = small_rollout / "rollouts.csv"
    assert run("stats", csv, "--reference", csv, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["variance_ratio"] == 1.0 and doc["seed"] == 3


def test_plot_deterministic(tmp_path, small_rollout):
    csv = small_rollout / "rollouts.csv"
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert run("plot", csv, csv, "--labels", "x,y", "-o", a) == 0
    assert run("plot", csv, csv, "--labels", "x,y", "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("<svg")
    assert run("plot", "-o", a) == 2
    assert run("plot", csv, "--labels", "x,y", "-o", a) == 2


def test_baseline_vi_small(tmp_path):
    out = tmp_path / "vi"
    rc = run("baseline-vi", "zebra", "--state-bins", 41, "--action-bins", 11, "-n", 50, "--out", out)
    assert rc == 0
    names = {"grid.json", "vi_policy.csv", "vi_rollouts.csv", "gs_rollouts.csv", "comparison.csv"}
    assert names <= {p.name for p in out.iterdir()}
    head = (out / "comparison.csv").read_text().splitlines()
    assert head[0] == "quantity,agent,component,t,gs_mean,gs_std,vi_mean,vi_std"
    assert head[1].startswith("state,i,0,0,-6.0,0.0,-6.0,0.0")
    assert manifest(out)["extra"]["sweeps"] >= 1


def test_baseline_vi_bad_grid_flags(tmp_path):
    assert run("baseline-vi", "zebra", "--state-bins", 1, "--out", tmp_path) == 2
    bad = tmp_path / "grid.json"
    bad.write_text("{}")
    assert run("baseline-vi", "zebra", "--grid", bad, "--out", tmp_path) == 2
    with pytest.raises(SystemExit) as info:
        run("baseline-vi", "zebra", "--state-bins", "many")
    assert info.value.code == 2


def test_baseline_vi_refuses_three_state_dims(tmp_path, capsys):
    integ = AgentDynamics("integrator", 3, 3)
    terms_i = [WeightedTerm(StateQuadratic("i"), 0), WeightedTerm(ActionQuadratic("i"), 0)]
    terms_j = [WeightedTerm(StateQuadratic("j"), 0), WeightedTerm(ActionQuadratic("j"), 0)]
    cfg = ScenarioConfig("cube", DynamicsModel(integ, integ), terms_i, terms_j, [1.0], JointState(np.ones(3), -np.ones(3)), 3)
    path = tmp_path / "cube.json"
    dump_scenario(cfg, path)
    assert run("baseline-vi", path, "--out", tmp_path) == 3
    assert "GridTooCoarse" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gscioc.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("gscioc ")
