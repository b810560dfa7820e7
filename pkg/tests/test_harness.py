import json
import math
import os

import numpy as np
import pytest

from anchorsim.config import load_config
from anchorsim.harness import (
    BASELINE,
    CSV_SCHEMA,
    PROPOSED,
    Failure,
    RunOutcome,
    Scenario,
    build_setup,
    compare,
    csv_columns,
    emit_traces,
    failure_threshold,
    read_traces,
    run,
    run_metadata,
)
from anchorsim.simrel import simulation_fn

SETUP = build_setup(load_config())
SHORT = dict(push_time=0.5, total_time=2.0)


@pytest.fixture(scope="module")
def short_run():
    sc = Scenario(push_force=20.0, **SHORT)
    return sc, *run(sc, SETUP)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(controller="Nope")
    with pytest.raises(ValueError):
        Scenario(push_force=-1.0)
    with pytest.raises(ValueError):
        Scenario(push_time=9.995, total_time=10.0)
    sc = Scenario.from_dict({"push_force": 5, "push_direction": [1, 0], "config": "x.json"})
    assert sc.push_direction == (1, 0) and sc.push_force == 5


def test_outcome_is_exclusive():
    with pytest.raises(ValueError):
        RunOutcome(recovered=True, failure=Failure("CwcViolated", 1.0))
    with pytest.raises(ValueError):
        RunOutcome(recovered=False)


def test_header_only_csv(tmp_path):
    path = emit_traces([], str(tmp_path / "empty.csv"))
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines == [",".join(csv_columns(4))]
    meta = json.load(open(tmp_path / "empty.meta.json"))
    assert meta["csv_schema"] == CSV_SCHEMA


def test_row_count(short_run):
    sc, _, recs = short_run
    assert len(recs) == math.ceil(sc.total_time * SETUP.cfg["simulation"]["control_rate"])


def test_short_push_recovers_cleanly(short_run):
    _, out, recs = short_run
    assert not out.assertion_failures
    assert out.flagged_ticks == 0
    assert all(r.qp_status == "Optimal" for r in recs)
    assert all(r.cwc_slack_full <= 0 for r in recs)


def test_csv_round_trip(tmp_path, short_run):
    _, _, recs = short_run
    path = emit_traces(recs, str(tmp_path / "trace.csv"))
    rows = read_traces(path)
    assert len(rows) == len(recs)
    for row, r in zip(rows, recs):
        x_lip = np.array([float(row[f"x_lip_{i}"]) for i in range(5)])
        x_task = np.array([float(row[f"x_task_{i}"]) for i in range(5)])
        np.testing.assert_array_equal(x_task, r.x_task)
        assert simulation_fn(SETUP.rel, x_task, x_lip) == pytest.approx(float(row["V"]), abs=1e-9)
    timing = (tmp_path / "trace.timing.csv").read_text().splitlines()
    assert timing[0] == "t,solve_time" and len(timing) == len(recs) + 1


def test_traces_are_deterministic(tmp_path):
    sc = Scenario(push_force=50.0, push_time=0.3, total_time=1.0)
    a = emit_traces(run(sc, SETUP)[1], str(tmp_path / "a.csv"))
    b = emit_traces(run(sc, SETUP)[1], str(tmp_path / "b.csv"))
    assert open(a, "rb").read() == open(b, "rb").read()


def test_no_push_stays_at_rest():
    out, recs = run(Scenario(push_force=0.0, **SHORT), SETUP)
    assert out.recovered
    assert max(r.V for r in recs) <= 1e-9
    assert abs(out.final_com_x) <= 1e-6


def test_baseline_short_run():
    out, recs = run(Scenario(push_force=20.0, controller=BASELINE, **SHORT), SETUP)
    assert not out.assertion_failures
    assert all(r.qp_status == "Optimal" for r in recs)


def test_metadata(short_run):
    sc, out, _ = short_run
    meta = run_metadata(SETUP, sc, out)
    assert meta["scenario"]["push_force"] == 20.0
    assert len(meta["config_hash"]) == 16
    json.dumps(meta, default=lambda o: o.tolist())


def test_compare_grid_shape():
    rows = compare(SETUP, forces=(0.0,), controllers=(PROPOSED, BASELINE), base_scenario=Scenario(**SHORT))
    assert [r["controller"] for r in rows] == [PROPOSED, BASELINE]
    assert all(r["force"] == 0.0 for r in rows)


def test_threshold_returns_unbracketed_when_hi_recovers():
    base = Scenario(**SHORT)
    assert failure_threshold(SETUP, PROPOSED, 0.0, 10.0, base_scenario=base) == (10.0, False)


def test_forced_baseline_infeasibility_is_a_failure():
    cfg = load_config(overrides={"baseline": {"tau_min": [60, -5, -5, -5], "tau_max": [200, 5, 5, 5]}})
    out, recs = run(Scenario(push_force=0.0, controller=BASELINE, **SHORT), build_setup(cfg))
    assert not out.recovered
    assert out.failure.kind == "BaselineInfeasible"
    assert recs[0].qp_status == "PrimalInfeasible"
