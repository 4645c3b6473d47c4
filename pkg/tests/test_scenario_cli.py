import csv
import json
import os

import numpy as np
import pytest

from raretrack import cli
from raretrack.front import SolverError
from raretrack.postprocess import evaluate, read_polyline_csv
from raretrack.scenario import (Scenario, ScenarioError, builtin_scenarios, load_builtin,
        parse_reference, scenario_path)


def write_scenario(tmp_path, **changes):
    d = load_builtin("burgers_riemann").to_dict()
    d.update(changes)
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_builtins_round_trip():
    assert builtin_scenarios() == ["buckley_leverett.json", "burgers_bump.json",
            "burgers_riemann.json", "quartic_shock.json"]
    for name in builtin_scenarios():
        sc = load_builtin(name)
        again = Scenario.loads(sc.dumps())
        assert again == sc
        assert Scenario.loads(again.dumps()).dumps() == sc.dumps()


@pytest.mark.parametrize("change, match", [
    ({"t_end": -1.0}, "t_end"),
    ({"output_times": [1.0, 0.5]}, "output_times"),
    ({"d_max": 0.1, "d_min": 0.2}, "d_max"),
    ({"flux": {"id": "nope"}}, "invalid"),
    ({"colour": "red"}, "unknown"),
])
def test_validation(change, match):
    d = load_builtin("burgers_riemann").to_dict()
    d.update(change)
    with pytest.raises(ScenarioError, match=match):
        Scenario.from_dict(d)


def test_parse_reference():
    assert parse_reference("oracle") == {"type": "oracle", "factor": 16}
    assert parse_reference("oracle:4") == {"type": "oracle", "factor": 4}
    assert parse_reference("cells:800") == {"type": "oracle", "cells": 800}
    assert parse_reference("analytic:burgers_shock")["name"] == "burgers_shock"
    with pytest.raises(ScenarioError):
        parse_reference("bogus")


def test_run_quartic(tmp_path):
    out = tmp_path / "q"
    assert cli.main(["--quiet", "run", scenario_path("quartic_shock"), "-o", str(out)]) == 0
    for t in ("0.0", "0.25", "8.0"):
        for kind in ("raw", "sharpened"):
            p = read_polyline_csv(out / f"{kind}_t{t}.csv")
            assert len(p.x) > 100
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["conservation_error"]) <= 1e-9 * abs(summary["ledger"])
    assert summary["event_counts"]["merge"] > 0
    assert summary["shock_counts"]["8.0"] >= 2
    with open(out / "diagnostics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {"t", "area", "tv", "entropy_0", "particles", "f_evals"} <= set(rows[0])
    assert all(float(a["t"]) <= float(b["t"]) for a, b in zip(rows, rows[1:]))


def test_run_t_end_zero(tmp_path):
    path = write_scenario(tmp_path, t_end=0.0, output_times=None)
    assert cli.main(["--quiet", "run", path, "-o", str(tmp_path / "o")]) == 0
    sc = Scenario.load(path)
    p = read_polyline_csv(tmp_path / "o" / "raw_t0.0.csv")
    q = evaluate(sc.initial_front())
    np.testing.assert_array_equal(p.x, q.x)
    np.testing.assert_array_equal(p.u, q.u)


def test_run_buckley_leverett(tmp_path):
    out = tmp_path / "bl"
    assert cli.main(["--quiet", "run", scenario_path("buckley_leverett"), "-o", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert names == ["diagnostics.csv", "raw_t0.1.csv", "raw_t0.2.csv", "raw_t0.4.csv", "summary.json"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["event_counts"].get("merge_inflection", 0) > 0


def test_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["--quiet", "run", scenario_path("buckley_leverett"), "-o", str(tmp_path / d)]) == 0
    for name in ("raw_t0.1.csv", "raw_t0.2.csv", "raw_t0.4.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_converge_table(tmp_path, capsys):
    out = tmp_path / "c"
    rc = cli.main(["converge", scenario_path("burgers_riemann"), "--n", "20,40,80", "--post", "-o", str(out)])
    assert rc == 0
    data = json.loads((out / "converge.json").read_text())
    assert [r["n"] for r in data["rows"]] == [20, 40, 80]
    with open(out / "converge.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "d_max", "error_raw", "error_sharpened"]
    assert rows[-1][0] == "order"
    # the sharpened Riemann shock is exact
    assert max(r["error_sharpened"] for r in data["rows"]) < 1e-12
    assert "order" in capsys.readouterr().out


def test_converge_needs_three(tmp_path):
    assert cli.main(["--quiet", "converge", scenario_path("burgers_riemann"), "--n", "20,40"]) == 2


def test_converge_reference_unavailable(capsys):
    rc = cli.main(["--quiet", "converge", scenario_path("quartic_shock"), "--n", "20,40,80",
            "--reference", "analytic:quartic_presshock_moc", "--time", "8"])
    assert rc == 2
    assert "reference unavailable" in capsys.readouterr().err


def test_compare(tmp_path):
    out = tmp_path / "m"
    rc = cli.main(["--quiet", "compare", scenario_path("burgers_riemann"), "--cells", "200,400,400",
            "-o", str(out)])
    assert rc == 0
    data = json.loads((out / "compare.json").read_text())
    rows = data["rows"]
    assert rows[1] == rows[2]
    assert data["plateau"] == rows[-1]["l1"]
    assert rows[0]["l1"] > rows[1]["l1"]


def test_compare_source_scenario(tmp_path):
    out = tmp_path / "bump"
    rc = cli.main(["--quiet", "compare", scenario_path("burgers_bump"), "--cells", "400,1600,6400",
            "--n", "100", "-o", str(out)])
    assert rc == 0
    l1 = [r["l1"] for r in json.loads((out / "compare.json").read_text())["rows"]]
    assert l1[0] > l1[1] > l1[2]
    assert l1[-1] < 0.1


def test_global_flags_either_side(tmp_path):
    log = tmp_path / "logs" / "events.jsonl"
    rc = cli.main(["run", scenario_path("burgers_riemann"), "-o", str(tmp_path / "r"), "--quiet",
            "--log-events", str(log)])
    assert rc == 0
    kinds = [json.loads(line)["kind"] for line in log.read_text().splitlines()]
    assert kinds[0] == "start" and kinds[-1] == "end" and "merge" in kinds


def test_invalid_inputs(tmp_path, capsys):
    assert cli.main(["--quiet", "run", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["--quiet", "run", str(bad), "-o", str(tmp_path)]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_solver_abort(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise SolverError("synthetic failure", {"where": "test"})

    monkeypatch.setattr(cli.front_mod, "run", boom)
    out = tmp_path / "x"
    assert cli.main(["--quiet", "run", scenario_path("burgers_riemann"), "-o", str(out)]) == 3
    err = capsys.readouterr().err
    assert str(out / "solver_dump.json") in err
    dump = json.loads((out / "solver_dump.json").read_text())
    assert dump["dump"] == {"where": "test"}
