import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowrank import __version__
from lowrank.cli import read_config, run
from lowrank.sampling import builtin_family, materialize, uniform_grid, write_matrix_csv
from lowrank.serialize import as_array, dumps, load, write_atomic

from oracles import ANALYTIC_20_SCALED


@pytest.fixture
def matrix_csv(tmp_path):
    g = uniform_grid(0.0, 1.0, 8)
    snap = materialize(builtin_family("cauchy", c=1.0), g, g)
    path = tmp_path / "m.csv"
    write_matrix_csv(snap, path)
    return path


def run_ok(argv):
    code = run([str(a) for a in argv])
    assert code == 0, argv
    return code


# --- serialisation ---------------------------------------------------------

@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_floats_round_trip(x):
    assert json.loads(dumps([x]))[0] == x


def test_non_finite_floats_are_strings():
    text = dumps({"a": [math.inf, -math.inf, math.nan], "b": 2.0, "c": 3})
    doc = json.loads(text)
    assert doc["a"] == ["inf", "-inf", "nan"]
    assert '"b": 2.0' in text and '"c": 3' in text
    back = as_array(doc["a"])
    assert back[0] == math.inf and back[1] == -math.inf and math.isnan(back[2])


def test_dumps_layout_is_stable():
    doc = {"x": np.array([1.0, 0.1]), "nested": {"t": (1, 2), "m": [[1.0], [2.0]]},
           "flag": np.bool_(True), "none": None}
    assert dumps(doc) == dumps(doc)
    assert '"x": [1.0, 0.10000000000000001]' in dumps(doc)
    assert json.loads(dumps(doc))["nested"]["m"] == [[1.0], [2.0]]


def test_dumps_rejects_objects():
    with pytest.raises(TypeError):
        dumps({"a": object()})


def test_write_atomic(tmp_path):
    target = tmp_path / "out.json"
    write_atomic(target, "first\n")
    write_atomic(target, "second\n")
    assert target.read_text() == "second\n"
    assert os.listdir(tmp_path) == ["out.json"]
    assert (os.stat(target).st_mode & 0o777) == 0o644


# --- subcommands -----------------------------------------------------------

def test_decompose_aca_global(matrix_csv, tmp_path):
    out = tmp_path / "fac.json"
    run_ok(["decompose", "--method", "aca", "--pivot", "global", "--tol", "1e-8",
            "--input", matrix_csv, "--out", out])
    doc = load(out)
    assert doc["version"] == __version__ and doc["method"] == "aca"
    assert set(doc) >= {"config", "seed", "grids", "factors", "history"}
    fac = doc["factors"]
    assert fac["Q"] == len(fac["tau"]) == len(fac["sigma"]) == len(fac["u"]) == len(fac["v"])
    assert len(doc["history"]["indicator"]) == fac["Q"]
    assert doc["history"]["max_remainder"][-1] < 1e-8
    assert doc["config"]["tol"] == 1e-8
    assert doc["grids"]["x"]["measure"] == 1.0


def test_decompose_aca_partial_random(matrix_csv, tmp_path):
    out = tmp_path / "fac.json"
    run_ok(["decompose", "--method", "aca", "--pivot", "partial", "--row-rule", "random",
            "--seed", "4", "--input", matrix_csv, "--out", out])
    doc = load(out)
    assert doc["seed"] == 4 and doc["config"]["row_rule"] == "random"
    # every candidate reads one row and one column of the 8 x 8 matrix
    assert doc["factors"]["entry_count"] == 16 * len(doc["history"]["indicator"])


@pytest.mark.parametrize("method,extra", [
    ("pod", ["--rank", "3"]),
    ("pod", ["--tol", "1e-6"]),
    ("eim", ["--p", "2"]),
    ("geim", ["--dictionary", "dirac+average"]),
])
def test_decompose_other_methods(method, extra, tmp_path):
    out = tmp_path / "f.json"
    run_ok(["decompose", "--method", method, "--family", "analytic", "--mx", "12",
            "--ny", "10"] + extra + ["--out", out])
    doc = load(out)
    assert doc["method"] == method
    assert len(doc["factors"]["basis"]) == doc["factors"]["Q"]
    assert doc["config"]["family"] == "analytic" and doc["config"]["mx"] == 12


def test_decompose_to_stdout(capsys):
    run_ok(["decompose", "--family", "constant", "--mx", "3", "--ny", "2"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["factors"]["Q"] == 1


def test_compare_input(matrix_csv, tmp_path):
    out = tmp_path / "cmp.json"
    run_ok(["compare", "--input", matrix_csv, "--qmax", "8", "--out", out])
    doc = load(out)
    assert doc["holds"] and doc["failed"] == []
    assert doc["reports"]["input"]["indices_match"]


def test_compare_corpus(tmp_path):
    out = tmp_path / "cmp.json"
    run_ok(["compare", "--count", "5", "--seed", "2", "--out", out])
    doc = load(out)
    assert len(doc["reports"]) == 5 and doc["seed"] == 2


def test_report_csv_has_nwidth_floor(tmp_path):
    out = tmp_path / "decay.csv"
    run_ok(["report", "--family", "analytic", "--mx", "20", "--ny", "20",
            "--methods", "pod,eim_inf", "--qmax", "12", "--out", out])
    lines = out.read_text().splitlines()
    assert lines[0] == "Q,nwidth,pod,eim_inf"
    assert len(lines) == 14
    nwidth = [float(line.split(",")[1]) for line in lines[1:9]]
    np.testing.assert_allclose(nwidth, ANALYTIC_20_SCALED[:8], rtol=1e-8)


def test_report_json(tmp_path):
    out = tmp_path / "decay.json"
    run_ok(["report", "--family", "cauchy", "--param", "c=2", "--mx", "8", "--ny", "8",
            "--methods", "aca_global", "--qmax", "3", "--out", out])
    doc = load(out)
    assert [r["Q"] for r in doc["rows"]] == [0, 1, 2, 3]
    assert doc["config"]["param"] == {"c": 2.0}


@pytest.mark.parametrize("criterion", ["cond", "error"])
def test_sensors_from_basis(criterion, tmp_path):
    basis = tmp_path / "pod.json"
    run_ok(["decompose", "--method", "pod", "--rank", "3", "--family", "cauchy",
            "--mx", "12", "--ny", "9", "--out", basis])
    out = tmp_path / "sensors.json"
    run_ok(["sensors", "--basis", basis, "--criterion", criterion, "--L", "5", "--out", out])
    doc = load(out)
    assert len(doc["factors"]["sensors"]) == 5
    assert np.isfinite(float(doc["factors"]["gram_cond"]))
    key = "kappa" if criterion == "cond" else "error"
    assert key in doc["history"]


# --- exit codes ------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["decompose", "--bogus"],
    ["decompose", "--family", "analytic", "--tol", "-1"],
    ["decompose"],
    ["sensors", "--criterion", "cond"],
    ["report", "--family", "analytic", "--methods", "svd"],
    ["decompose", "--family", "cauchy", "--param", "c"],
])
def test_usage_errors(argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err


def test_io_errors(tmp_path):
    assert run(["decompose", "--input", str(tmp_path / "missing.csv")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,oops\n")
    assert run(["decompose", "--input", str(bad)]) == 3
    junk = tmp_path / "junk.json"
    junk.write_text("not json")
    assert run(["sensors", "--basis", str(junk), "--L", "2"]) == 3
    wrong = tmp_path / "wrong.json"
    wrong.write_text("{}")
    assert run(["sensors", "--basis", str(wrong), "--L", "2"]) == 3


def test_numeric_errors(tmp_path):
    assert run(["decompose", "--family", "cauchy", "--param", "c=-1"]) == 2
    basis = tmp_path / "b.json"
    run_ok(["decompose", "--method", "pod", "--rank", "3", "--family", "cauchy",
            "--mx", "8", "--ny", "8", "--out", basis])
    doc = load(basis)
    # a basis that vanishes at every grid point cannot be reconstructed from sensors
    doc["factors"]["basis"] = [[0.0] * 8, [0.0] * 8]
    basis.write_text(dumps(doc))
    assert run(["sensors", "--basis", str(basis), "--criterion", "error", "--L", "2"]) == 2


# --- configuration and logging ---------------------------------------------

def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "lowrank.cfg"
    cfg.write_text("# defaults\nmethod = eim\np = 2\nfamily = cauchy\nparam = c=2; \n"
                   "mx = 6\nny = 5\n")
    out = tmp_path / "f.json"
    run_ok(["--config", cfg, "decompose", "--p", "inf", "--out", out])
    doc = load(out)
    assert doc["method"] == "eim"
    assert doc["config"]["p"] == "inf"
    assert doc["config"]["param"] == {"c": 2.0}
    assert len(doc["grids"]["x"]["points"]) == 6


def test_config_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("method eim\n")
    assert run(["--config", str(cfg), "decompose", "--family", "analytic"]) == 1
    cfg.write_text("nonsense = 1\n")
    assert run(["--config", str(cfg), "decompose", "--family", "analytic"]) == 1
    cfg.write_text("tol = abc\n")
    assert run(["--config", str(cfg), "decompose", "--family", "analytic"]) == 1
    assert run(["--config", str(tmp_path / "none.cfg"), "decompose"]) == 3
    assert read_config(tmp_path / "bad.cfg") == {"tol": "abc"}


def test_log_levels(tmp_path, capsys, monkeypatch):
    out = tmp_path / "f.json"
    monkeypatch.setenv("LOWRANK_LOG", "debug")
    run_ok(["decompose", "--family", "analytic", "--mx", "5", "--ny", "5", "--out", out])
    assert "wrote" in capsys.readouterr().err
    monkeypatch.setenv("LOWRANK_LOG", "quiet")
    run_ok(["decompose", "--family", "analytic", "--mx", "5", "--ny", "5", "--out", out])
    assert capsys.readouterr().err == ""


def test_module_entry_point(tmp_path):
    out = tmp_path / "f.json"
    proc = subprocess.run([sys.executable, "-m", "lowrank", "decompose", "--family",
                           "analytic", "--mx", "6", "--ny", "6", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load(out)["factors"]["Q"] >= 1
    proc = subprocess.run([sys.executable, "-m", "lowrank", "--nope"], capture_output=True)
    assert proc.returncode == 1


def test_identical_invocations_are_byte_identical(matrix_csv, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        run_ok(["decompose", "--method", "aca", "--pivot", "partial", "--row-rule", "random",
                "--seed", "11", "--input", matrix_csv, "--out", out])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
