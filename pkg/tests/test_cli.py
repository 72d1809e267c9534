import json

import numpy as np
import pytest

from gpplan.cli import main, read_trajectory_json
from gpplan.problem import load_problem
from gpplan.workspace import read_sdf_csv

TIME_FIELDS = {"time", "wall_time", "avg_time", "max_time"}


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    assert main(["scenarios", "--out-dir", str(out)]) == 0
    return out


def _strip_times(obj):
    if isinstance(obj, dict):
        return {k: _strip_times(v) for k, v in obj.items() if k not in TIME_FIELDS}
    if isinstance(obj, list):
        return [_strip_times(v) for v in obj]
    return obj


def _write_problem(path, suite_dir, name, **changes):
    data = json.loads((suite_dir / f"{name}.json").read_text())
    data["scene"] = str(suite_dir / data["scene"])
    data["robot"] = str(suite_dir / data["robot"])
    data.update(changes)
    path.write_text(json.dumps(data))
    return path


def test_scenarios_export_ten_loadable_problems(suite_dir):
    problems = sorted(p for p in suite_dir.glob("*.json") if p.name.count(".") == 1)
    assert len(problems) == 10
    for p in problems:
        prob = load_problem(p)
        assert prob.name == p.stem


def test_plan_writes_round_trippable_trajectory(suite_dir, tmp_path, capsys):
    out = tmp_path / "traj.json"
    assert main(["plan", str(suite_dir / "arm2_box.json"), "--out", str(out)]) == 0
    assert "feasible" in capsys.readouterr().out
    raw = json.loads(out.read_text())
    traj = read_trajectory_json(out)
    np.testing.assert_array_equal(traj["states"], np.array(raw["states"]))
    assert traj["states"].shape == (11, 4)
    assert traj["times"][0] == 0.0 and traj["times"][-1] == pytest.approx(5.0)
    assert traj["upsampled"]["states"].shape == (11 + 10 * 5, 4)
    assert traj["stats"]["feasible"] is True
    assert min(raw["upsampled"]["clearance"]) > 0


def test_plot_does_not_change_the_trajectory(suite_dir, tmp_path):
    a, b, svg = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "p.svg"
    problem = str(suite_dir / "point_corridor.json")
    assert main(["plan", problem, "--out", str(a)]) == 0
    assert main(["plan", problem, "--out", str(b), "--plot", str(svg)]) == 0
    assert read_trajectory_json(a)["states"].tolist() == read_trajectory_json(b)["states"].tolist()
    assert svg.read_text().startswith("<svg")


@pytest.mark.parametrize("algorithm", ["gpmp", "igpmp2"])
def test_plan_with_other_algorithms(suite_dir, tmp_path, algorithm):
    out = tmp_path / "t.json"
    rc = main(["plan", str(suite_dir / "arm2_box.json"), "--out", str(out), "--algorithm", algorithm])
    assert rc == 0
    assert json.loads(out.read_text())["stats"]["algorithm"] == algorithm


def test_infeasible_problem_exits_one(suite_dir, tmp_path):
    # start and goal inside the corridor's upper wall
    prob = _write_problem(tmp_path / "bad.json", suite_dir, "point_corridor",
                          start_q=[0.0, 0.8], goal_q=[0.0, 0.9])
    assert main(["plan", str(prob), "--out", str(tmp_path / "t.json")]) == 1


def test_configuration_errors_exit_two(suite_dir, tmp_path, capsys):
    out = str(tmp_path / "t.json")
    assert main(["plan", str(tmp_path / "missing.json"), "--out", out]) == 2
    assert main(["plan", str(suite_dir / "arm2_box.json"), "--out", out, "--eps", "-1"]) == 2
    assert main(["plan", str(suite_dir / "arm2_box.json"), "--out", out, "--n-segments", "0"]) == 2
    bad = _write_problem(tmp_path / "p.json", suite_dir, "arm2_box", params={"nope": 1})
    assert main(["plan", str(bad), "--out", out]) == 2
    assert "error:" in capsys.readouterr().err


def test_flags_override_problem_file(suite_dir, tmp_path):
    prob = _write_problem(tmp_path / "p.json", suite_dir, "arm2_box", N=6, params={"q_c": 2.0, "lambda": 0.1})
    loaded = load_problem(prob)
    assert loaded.n_segments == 6
    assert loaded.params.qc == 2.0 and loaded.params.lam == 0.1
    over = load_problem(prob, {"N": 8, "params": {"qc": 3.0}})
    assert over.n_segments == 8
    assert over.params.qc == 3.0 and over.params.lam == 0.1
    out = tmp_path / "t.json"
    assert main(["plan", str(prob), "--out", str(out), "--n-segments", "4", "--n-ip", "2"]) in (0, 1)
    traj = read_trajectory_json(out)
    assert traj["states"].shape[0] == 5
    assert traj["upsampled"]["states"].shape[0] == 5 + 4 * 2


def test_benchmark_is_deterministic(suite_dir, tmp_path):
    sub = tmp_path / "two"
    sub.mkdir()
    for name in ("arm2_box", "point_corridor"):
        _write_problem(sub / f"{name}.json", suite_dir, name)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["benchmark", str(sub), "--algorithms", "gpmp2,igpmp2", "--random-variants", "1", "--seed", "7"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert _strip_times(ra) == _strip_times(rb)
    assert ra["problems"] == ["arm2_box", "point_corridor"]
    assert len(ra["algorithms"]["gpmp2"]["runs"]) == 4
    assert 0.0 <= ra["algorithms"]["igpmp2"]["success_rate"] <= 100.0


def test_benchmark_empty_directory_exits_two(tmp_path):
    assert main(["benchmark", str(tmp_path), "--out", str(tmp_path / "r.json")]) == 2


def test_benchmark_unknown_algorithm_exits_two(suite_dir, tmp_path):
    assert main(["benchmark", str(suite_dir), "--algorithms", "rrt", "--out", str(tmp_path / "r.json")]) == 2


def test_sdf_csv(suite_dir, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["sdf", str(suite_dir / "point_corridor.scene.json"), "--out", str(out), "--cell-size", "0.05"]) == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[2:] == ["0.05", "-2.0", "-2.0"]
    sdf = read_sdf_csv(out)
    assert (sdf.width, sdf.height) == (80, 80)
    assert sdf.values.min() < 0 < sdf.values.max()


def test_replan_new_goal_and_fixed_state(suite_dir, tmp_path, capsys):
    prob = str(suite_dir / "arm2_box.json")
    out = tmp_path / "r.json"
    rc = main(["replan", prob, "--out", str(out), "--new-goal", "2.3", "0.6", "--plot", str(tmp_path / "r.svg")])
    assert rc in (0, 1)
    data = json.loads(out.read_text())
    assert set(data) == {"original", "incremental", "batch", "timing", "objective"}
    assert data["timing"]["touched_cliques"] == 1
    assert "clique" in capsys.readouterr().out
    rc = main(["replan", prob, "--out", str(out), "--fixed-state", "5", "--single-update"])
    assert rc in (0, 1)
    assert json.loads(out.read_text())["timing"]["touched_cliques"] == 6


def test_replan_needs_a_change(suite_dir, tmp_path):
    assert main(["replan", str(suite_dir / "arm2_box.json"), "--out", str(tmp_path / "r.json")]) == 2
