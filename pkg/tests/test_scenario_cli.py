import csv
import json

import numpy as np
import pytest

from uvms_transport.cli import EXIT_OK, EXIT_VALIDATION, main, trajectory_header
from uvms_transport.errors import ScenarioError
from uvms_transport.scenario import default_scenario, default_scenario_path, parse_scenario

TEXT = default_scenario_path().read_text()


def variant(old, new):
    assert old in TEXT
    return TEXT.replace(old, new, 1)


def test_default_scenario_values():
    sc = default_scenario()
    assert sc.n_agents == 2
    assert sc.nmpc.h == 0.12 and sc.nmpc.horizon_steps == 5
    np.testing.assert_allclose(sc.load_sharing.c, [0.5, 0.5])
    np.testing.assert_allclose(sc.nmpc.state_weight, 0.8 * np.eye(6))
    np.testing.assert_allclose(sc.nmpc.velocity_weight, 0.4 * np.eye(6))
    np.testing.assert_allclose(sc.waypoints[2], [12.0, 6.5, 0.65])
    np.testing.assert_allclose(sc.agents[0].actuation_bound_vector(), [10] * 6 + [2] * 4)
    # grasps 1.2 m apart, closer than twice the agent radius: a warning, not an error
    assert any("apart" in w for w in sc.warnings)


def test_load_sharing_must_be_convex():
    with pytest.raises(ScenarioError) as ei:
        parse_scenario(variant("load_share: 0.5", "load_share: 0.6"), "bad.yaml")
    (line,) = ei.value.diagnostics
    assert line.startswith("bad.yaml:")
    assert int(line.split(":")[1]) > 0
    assert "sum to 1" in line and "convex combination" in line


def test_unknown_key_is_an_error():
    with pytest.raises(ScenarioError, match="colour"):
        parse_scenario(variant("  gain: 0.5", "  gain: 0.5\n  colour: red"))


def test_non_spd_weight_is_named():
    with pytest.raises(ScenarioError, match="state_weight is not positive definite"):
        parse_scenario(variant("  state_weight: 0.8", "  state_weight: [1, 1, 1, 1, 1, -1]"))


def test_horizon_must_be_multiple_of_sampling_time():
    with pytest.raises(ScenarioError, match="integer multiple"):
        parse_scenario(variant("prediction_horizon: 0.6", "prediction_horizon: 0.65"))


def test_waypoint_inside_obstacle_rejected():
    with pytest.raises(ScenarioError, match="free space"):
        parse_scenario(variant("[7.5, 1.5, 0.78, 0.0, 0.0, 0.0]", "[9.0, -1.5, 0.75, 0.0, 0.0, 0.0]"))


def test_gimbal_lock_start_rejected():
    with pytest.raises(ScenarioError, match="pitch"):
        parse_scenario(variant("[-0.7, 0.0, 0.72, 0.04, -0.07, 0.0]", "[-0.7, 0.0, 0.72, 0.0, 1.56, 0.0]"))


def test_dry_run_validates_without_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(default_scenario_path()), "--dry-run", "--out", str(out)]) == EXIT_OK
    assert not out.exists()
    assert "valid" in capsys.readouterr().out


def test_run_rejects_invalid_file(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text(variant("load_share: 0.5", "load_share: 0.6"))
    assert main(["run", str(p), "--dry-run"]) == EXIT_VALIDATION
    assert "bad.yaml:" in capsys.readouterr().err


def test_trivial_run_writes_artifacts(tmp_path):
    start = "[-0.7, 0.0, 0.72]"
    text = TEXT.split("  waypoints:")[0] + "  waypoints:\n    - " + start + "\n" + \
        "controller:" + TEXT.split("controller:")[1]
    p = tmp_path / "trivial.yaml"
    p.write_text(text)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out", str(out), "--strict"]) == EXIT_OK
    with open(out / "trajectory.csv") as f:
        rows = list(csv.reader(f))
    sc = default_scenario()
    assert rows[0] == trajectory_header(sc)
    assert all(len(r) == len(rows[0]) for r in rows[1:])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["terminated"] == "captured"
    for name in ("object_path.csv", "clearance.csv", "singularity_measure.csv",
                 "velocities_agent0.csv", "torques_agent1.csv", "arm_joints_agent0.csv"):
        assert (out / name).exists()


def test_check_runs_only_named_suites(capsys):
    assert main(["check", "--suite", "fd"]) == EXIT_OK
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 1 and "fd" in lines[0] and lines[0].startswith("PASS")


def test_check_rejects_unknown_suite(capsys):
    assert main(["check", "--suite", "nope"]) == EXIT_VALIDATION
    assert "nope" in capsys.readouterr().err
