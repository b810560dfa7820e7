import json

import pytest

from anchorsim.cli import main


def _out(capsys):
    return json.loads(capsys.readouterr().out)


def test_gains(capsys):
    assert main(["gains"]) == 0
    out = _out(capsys)
    assert out["certified"]
    assert max(out["closed_loop_eigenvalues"]) < 0


def test_gains_uncertifiable_exits_nonzero(tmp_path, capsys):
    # a decay rate beyond the slowest closed-loop pole cannot be certified
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"simrel": {"decay_rate": 0.25}}))
    assert main(["gains", "--config", str(p)]) == 1
    assert "DecayTooFast" in capsys.readouterr().err


def test_bad_config_is_usage_error(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 3}))
    assert main(["gains", "--config", str(p)]) == 2
    assert main(["gains", "--config", str(tmp_path / "missing.json")]) == 2


def test_cwc(capsys):
    assert main(["cwc"]) == 0
    out = _out(capsys)
    assert len(out["A_cone"]) == 4
    assert out["chebyshev_radius_at_nominal"] == pytest.approx(5.0)


def test_mpc_step_from_task_state(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"x_task": [0.05, 1.75, 0.0, 0.2, 0.0], "x_lip": [0.0, 1.75, 0.0, 0.0, 0.0]}))
    assert main(["mpc-step", "--state", str(p)]) == 0
    out = _out(capsys)
    assert out["status"] == "Optimal"
    assert out["variables"] == 70
    assert max(out["max_violation"].values()) <= 1e-8


def test_mpc_step_from_joint_state(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"qd": [0.1, 0.0, 0.0, 0.0]}))
    assert main(["mpc-step", "--state", str(p)]) == 0
    assert _out(capsys)["status"] == "Optimal"


def test_simulate_writes_outputs(tmp_path, capsys):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"push_force": 20.0, "push_time": 0.2, "total_time": 1.0}))
    out_dir = tmp_path / "run"
    assert main(["simulate", "--scenario", str(sc), "--out", str(out_dir)]) == 0
    summary = _out(capsys)
    assert summary["assertions"] == 0
    meta = json.loads((out_dir / "trace.meta.json").read_text())
    assert meta["csv_schema"] == "anchorsim.trace/1"
    assert meta["scenario"]["push_force"] == 20.0
    assert (out_dir / "trace.timing.csv").exists()
    assert len((out_dir / "trace.csv").read_text().splitlines()) == 21


def test_simulate_relative_config(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"mpc": {"horizon": 4}}))
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"push_force": 0.0, "push_time": 0.2, "total_time": 0.5, "config": "cfg.json"}))
    assert main(["simulate", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == 0


def test_simulate_band_violation_exits_one(tmp_path, capsys):
    # a negative band turns any non-decrease of V into an assertion failure
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"push_force": 0.0, "push_time": 0.2, "total_time": 0.5}))
    assert main(["simulate", "--scenario", str(sc), "--out", str(tmp_path / "o"), "--v-band", "-1"]) == 1


def test_compare_json(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": {"push_time": 0.2, "total_time": 0.6}}))
    assert main(["compare", "--config", str(cfg), "--forces", "10", "--json"]) == 0
    grid = _out(capsys)["grid"]
    assert {r["controller"] for r in grid} == {"ProposedMpc", "BaselineQp"}


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 2
