import csv
import io
import json
import os

import jsonschema
import pytest

from circledirac.cli import main, matches_printed, report_schema


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    return code, json.loads(out), err


@pytest.mark.parametrize("argv", [("derive", "--k", "0"), ("sweep", "--k", "1"), ("bound", "--a2", "-1"),
                                  ("bound", "--xs", "1,2", "--ys", "3"), ("bound", "--spec", "nonsense")])
def test_usage_errors_exit_64(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 64 and out == ""
    assert "error" in err


def test_bad_flag_exits_64(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bound", "--no-such-flag"])
    assert exc.value.code == 64


@pytest.mark.parametrize("flag, value", [("--reduced", 0.050625), ("--full", 0.225625)])
def test_position_bound(capsys, flag, value):
    code, rep, _ = run_json(capsys, "bound", "--spec", "x1-Px1", flag)
    assert code == 0
    assert rep["result"]["value"] == pytest.approx(value, abs=1e-12)


def test_calibrated_momentum_bound_states_caveat(capsys):
    code, rep, _ = run_json(capsys, "bound", "--spec", "Px1-Py1")
    r = rep["result"]
    assert code == 0 and r["alpha_source"] == "calibrated"
    assert r["value"] == pytest.approx(1.97e-3, rel=1e-9)
    assert "alpha" in r["caveat"]


def test_sweep_csv(capsys):
    code, out, _ = run(capsys, "sweep", "--kind", "upper", "--k", "2", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {"A", "B", "bound", "baseline", "verdict"} <= set(rows[0])
    assert {r["verdict"] for r in rows} == {"above", "below"}


def test_sweep_without_crossing_exits_2(capsys):
    code, _, err = run(capsys, "sweep", "--kind", "upper", "--k", "2", "--grid-hi", "0.5", "--grid-n", "10")
    assert code == 2 and "NoCrossing" in err


def test_energy_report(capsys):
    code, rep, _ = run_json(capsys, "energy", "--chi1", "0.5", "--chi2", "1.2", "--alpha", "0.3")
    r = rep["result"]
    assert code == 0
    assert r["lz"]["total"] == pytest.approx(1.1)
    assert r["lz"]["particle1"] == pytest.approx(0.9) and r["lz"]["particle2"] == pytest.approx(0.2)
    code, rep, _ = run_json(capsys, "energy")
    assert rep["result"]["shift"] == {"re": pytest.approx(0.00625), "im": 0.0}


def test_json_is_deterministic(capsys):
    outs = [run(capsys, "bound", "--spec", "Px1-Py2", "--format", "json")[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_reports_validate_against_schema(capsys):
    schema = report_schema()
    for argv in (("bound", "--spec", "x1-Px1"), ("energy",), ("sweep", "--kind", "upper", "--k", "2"),
                 ("reproduce", "--only", "brackets,energy", "--json")):
        code, out, _ = run(capsys, *argv, "--format", "json")
        jsonschema.validate(json.loads(out), schema)


def test_out_writes_atomically(tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "bound", "--spec", "x1-Px1", "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["result"]["value"] == pytest.approx(0.050625)
    assert os.listdir(tmp_path) == ["report.json"]


def test_failed_run_leaves_no_file(tmp_path, capsys):
    target = tmp_path / "report.json"
    run(capsys, "derive", "--k", "0", "--out", str(target))
    assert not target.exists()


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# two-particle position bound\nspec = x1-Px1\nconvention = full\na2 = 10\n")
    _, rep, _ = run_json(capsys, "bound", "--config", str(cfg))
    assert rep["result"]["value"] == pytest.approx(0.225625)
    _, rep, _ = run_json(capsys, "bound", "--config", str(cfg), "--reduced")
    assert rep["result"]["value"] == pytest.approx(0.050625)


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert run(capsys, "bound", "--config", str(cfg))[0] == 64
    assert run(capsys, "bound", "--config", str(tmp_path / "missing"))[0] == 64


def test_reproduce_symbolic_subset(capsys):
    code, out, _ = run(capsys, "reproduce", "--only", "brackets")
    assert code == 0
    assert "all gated rows pass" in out


def test_derive_k1(capsys):
    code, rep, _ = run_json(capsys, "derive", "--k", "1")
    assert code == 0
    assert rep["result"]["matches_closed_form"] and all(rep["result"]["matches_closed_form"].values())


@pytest.mark.parametrize("value, printed, ok", [(0.050625, "0.05", True), (1.0327, "1.03", True),
                                                (11.2575, "11.26", True), (24.444, "24.5", False),
                                                (0.315, "0.32", True)])
def test_half_up_rounding(value, printed, ok):
    assert matches_printed(value, printed) is ok
