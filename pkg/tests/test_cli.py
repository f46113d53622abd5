import copy
import json

import numpy as np
import pytest

from stlrrt.cli import main, read_trajectory_csv, write_trajectory_csv
from stlrrt.errors import SchemaError, SemanticError
from stlrrt.scenario import (
    build_clohessy_wiltshire, load_scenario, scenario_from_dict, shipped,
)
from stlrrt.trajectory import Trajectory


@pytest.fixture(scope="module")
def room_raw():
    with open(shipped("room_service")) as fh:
        return json.load(fh)


def test_load_shipped_room_service():
    sc = load_scenario("room_service")
    assert sc.dyn.n == 2 and set(sc.predicates) >= {"h1", "h2", "h3", "hc"}
    assert len(sc.disjuncts()) == 2
    assert len(sc.obstacles) == 2


def test_load_shipped_iss():
    sc = load_scenario(shipped("iss_inspection"))
    assert sc.dyn.n == 6 and sc.dyn.m == 3


def test_missing_formula_is_schema_error(room_raw):
    d = copy.deepcopy(room_raw)
    del d["formula"]
    with pytest.raises(SchemaError) as ei:
        scenario_from_dict(d)
    assert ei.value.to_dict()["error"] == "schema_error"


def test_x0_outside_state_set(room_raw):
    d = copy.deepcopy(room_raw)
    d["x0"] = [11.0, 0.0]
    with pytest.raises(SemanticError):
        scenario_from_dict(d)


def test_unknown_predicate_in_formula(room_raw):
    d = copy.deepcopy(room_raw)
    d["formula"] = "F[0,5] nowhere"
    with pytest.raises(SemanticError):
        scenario_from_dict(d)


def test_clohessy_wiltshire_matrix():
    n = 1.13e-3
    A = build_clohessy_wiltshire(n).A
    assert A[3, 0] == pytest.approx(3 * n ** 2)
    assert A[3, 4] == pytest.approx(2 * n)
    assert A[4, 3] == pytest.approx(-2 * n)
    assert A[5, 2] == pytest.approx(-n ** 2)
    np.testing.assert_array_equal(A[:3, 3:], np.eye(3))
    with pytest.raises(ValueError):
        build_clohessy_wiltshire(0.0)


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    tr = Trajectory(np.linspace(0, 3, 7), rng.normal(size=(7, 2)), rng.normal(size=(6, 2)))
    write_trajectory_csv(tmp_path / "t.csv", tr)
    back = read_trajectory_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.times, tr.times)
    np.testing.assert_array_equal(back.states, tr.states)
    np.testing.assert_array_equal(back.inputs, tr.inputs)


def test_encode_command(tmp_path, capsys):
    assert main(["encode", "--scenario", "room_service", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "encode.json").read_text())
    assert len(doc["disjuncts"]) == 2
    assert doc["selected"] in (0, 1)
    assert doc["r_star"] == max(d.get("robustness", -1) for d in doc["disjuncts"])
    assert json.loads(capsys.readouterr().out)["selected"] == doc["selected"]


def _run_plan(out, seed=3):
    return main(["plan", "--scenario", "room_service", "--seed", str(seed), "--iters", "300",
                 "--out", str(out)])


def test_plan_then_monitor_roundtrip(tmp_path, capsys):
    assert _run_plan(tmp_path) == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert (tmp_path / "barrier_boundary.csv").exists()
    capsys.readouterr()
    assert main(["monitor", "--scenario", "room_service", "--trajectory",
                 str(tmp_path / "trajectory.csv"), "--dense-dt", str(stats["dense_dt"]),
                 "--r", str(stats["r_star"] - 1e-6), "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["rho"] - stats["rho"]) <= 1e-12
    assert doc["satisfied"]


def test_plan_replay_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run_plan(a, seed=5) == 0 and _run_plan(b, seed=5) == 0
    sa = json.loads((a / "stats.json").read_text())
    sb = json.loads((b / "stats.json").read_text())
    sa.pop("wall_time"), sb.pop("wall_time")
    assert sa == sb
    assert (a / "trajectory.csv").read_text() == (b / "trajectory.csv").read_text()


def test_simulate_command(tmp_path, capsys):
    assert main(["simulate", "--scenario", "room_service", "--dt", "0.02",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "simulate.json").read_text())
    assert doc["t_end"] == pytest.approx(300.0)
    assert doc["min_barrier"] >= -1e-3
    assert doc["rho"] >= doc["r_star"] - 1e-3


def test_errors_are_json_with_nonzero_exit(tmp_path, capsys):
    code = main(["encode", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "schema_error"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["encode", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
