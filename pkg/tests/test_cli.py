import csv
import io
import json
import math

import numpy as np
import pytest

from classim.cli import SWEEP_COLUMNS, VERIFY_COLUMNS, main
from classim.simulation import bb84_devices, save_devices
from classim.states import StateSet, gen_mub_bases, proj
from classim.steering import SteeringInequality


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path):
    return tmp_path


def test_gen_commands(capsys, files):
    code, out, _ = run(capsys, "gen", "mub", "--d", 3, "--n", 2, "-o", files / "e1.json")
    assert code == 0 and "m=6" in out
    assert StateSet.load(files / "e1.json").m == 6
    assert "m=4" in run(capsys, "gen", "bb84")[1]
    run(capsys, "gen", "sic", "--d", 4, "-o", files / "sic.json")
    assert StateSet.load(files / "sic.json").m == 16
    code, out, _ = run(capsys, "gen", "file", "--input", files / "e1.json", "--extend", "--noise", 0.5)
    assert code == 0 and "m=12" in out


def test_gen_unsupported_dimension(capsys):
    code, _, err = run(capsys, "gen", "sic", "--d", 5)
    assert code == 1 and "error" in err


def test_analytic(capsys, files):
    _, out, _ = run(capsys, "analytic", "--d", 3)
    assert "0.4167" in out
    _, out, _ = run(capsys, "analytic", "--d", 3, "--M", 2, "--json", files / "b.json")
    assert "0.5000" in out
    data = json.load(open(files / "b.json"))
    assert data["bounds"][1] == {"kind": "result3", "d": 3, "r": 3, "v": 0.5, "M": 2}
    assert "0.5000" in run(capsys, "analytic", "--d", 2)[1]
    assert run(capsys, "analytic", "--d", 3, "--r", 5)[0] == 1


def test_simulate_bb84_devices(capsys, files):
    run(capsys, "gen", "bb84", "-o", files / "bb84.json")
    save_devices(bb84_devices(), files / "bb84_devices.json")
    code, out, _ = run(capsys, "--seed", 4, "simulate", files / "bb84.json",
                       "--devices", f"file:{files / 'bb84_devices.json'}", "-o", files / "res.json")
    assert code == 0 and "v* = 0.707107" in out
    res = json.load(open(files / "res.json"))
    assert res["seed"] == 4 and abs(res["visibility"] - 1 / math.sqrt(2)) < 1e-6
    assert res["config"]["devices"].startswith("file:")


def test_simulate_bases_model_and_sweep(capsys, files):
    run(capsys, "gen", "mub", "--d", 3, "--n", 2, "-o", files / "e1.json")
    _, out, _ = run(capsys, "simulate", files / "e1.json", "--devices", "bases-model:2:3")
    assert float(out.split("v* = ")[1].split()[0]) >= 0.5 - 1e-6
    code, _, _ = run(capsys, "--seed", 7, "simulate", files / "e1.json", "--devices", "random:0",
                     "--sweep", "5,20", "--csv", files / "sweep.csv")
    rows = list(csv.DictReader(open(files / "sweep.csv")))
    assert code == 0 and tuple(rows[0]) == SWEEP_COLUMNS
    assert [r["param"] for r in rows] == ["5", "20"] and rows[0]["seed"] == "7"
    assert float(rows[1]["v_star"]) >= float(rows[0]["v_star"]) - 1e-7


def test_simulate_errors(capsys, files):
    run(capsys, "gen", "mub", "--d", 3, "--n", 2, "-o", files / "e1.json")
    assert run(capsys, "simulate", files / "e1.json", "--devices", "bogus")[0] == 1
    assert run(capsys, "simulate", files / "e1.json", "--devices", "random:500", "--cap", 100)[0] == 3
    assert run(capsys, "simulate", files / "missing.json", "--devices", "random:5")[0] == 1


def test_simulate_refine(capsys, files):
    run(capsys, "gen", "pair", "-o", files / "pair.json")
    code, out, _ = run(capsys, "simulate", files / "pair.json", "--devices", "mub-devices",
                       "--refine", 3, "--mode", "global", "-o", files / "r.json")
    assert code == 0
    hist = json.load(open(files / "r.json"))["history"]
    assert np.all(np.diff(hist) >= 0)


def test_witness_mub(capsys, files):
    code, out, _ = run(capsys, "witness", "mub", "--n", 2, "--critical", "-o", files / "w.json")
    assert code == 0 and "certified classical bound (upper)" in out
    rep = json.load(open(files / "w.json"))
    assert abs(rep["bound"]["beta"] - 4.6667) <= 1e-3
    assert abs(rep["critical_visibility"] - 0.6667) <= 2e-3


def test_witness_cap_and_file_eval(capsys, files):
    assert run(capsys, "witness", "mub", "--n", 4, "--bound", "--no-symmetry", "--cap", 1000)[0] == 3
    run(capsys, "witness", "mub", "--n", 2, "--save-witness", files / "w2.json")
    run(capsys, "gen", "mub", "--d", 3, "--n", 2, "--noise", 0.5, "-o", files / "noisy.json")
    _, out, _ = run(capsys, "witness", f"file:{files / 'w2.json'}", "--eval", files / "noisy.json")
    assert "W = 4.000000" in out


def test_witness_checkpoint_dir(capsys, files, monkeypatch):
    monkeypatch.setenv("CLASSIM_CHECKPOINT_DIR", str(files / "ck"))
    assert run(capsys, "witness", "mub", "--n", 2, "--bound")[0] == 0
    saved = json.load(open(files / "ck" / "witness-mub-d3-n2.json"))
    assert saved["done"] == 122
    assert run(capsys, "witness", "mub", "--n", 2, "--bound", "--resume")[0] == 0


def test_steer(capsys, files):
    ineq = SteeringInequality(np.eye(2), gen_mub_bases(2)[:2])
    json.dump(ineq.to_dict(), open(files / "zx.json", "w"))
    pair = StateSet(np.array([proj([1, 0]), proj(np.array([1, 1]) / math.sqrt(2))]))
    pair.save(files / "pair.json")
    code, out, _ = run(capsys, "steer", files / "zx.json", "--eval", files / "pair.json",
                       "-o", files / "w.json")
    assert code == 0 and "zeta = 1.414214" in out and "W = 2.000000" in out


def test_jm(capsys, files):
    pair = StateSet(np.array([proj([1, 0]), proj(np.array([1, 1]) / math.sqrt(2))]))
    pair.save(files / "zx.json")
    _, out, _ = run(capsys, "jm", files / "zx.json", "--threshold")
    assert abs(float(out.split("v = ")[1].split()[0]) - 1 / math.sqrt(2)) <= 1e-4
    run(capsys, "gen", "mub", "--d", 3, "--n", 2, "-o", files / "e1.json")
    assert "feasible" in run(capsys, "jm", files / "e1.json", "--v", 0.68)[1]
    assert run(capsys, "jm", files / "e1.json")[0] == 1


def test_verify(capsys, files):
    code, out, err = run(capsys, "verify", "table1")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and tuple(rows[0]) == VERIFY_COLUMNS
    assert all(r["pass"] == "True" for r in rows) and "6/6" in err
    code, _, _ = run(capsys, "verify", "haar", "--samples", 20000, "--csv", files / "h.csv")
    assert code == 0 and len(list(csv.DictReader(open(files / "h.csv")))) == 8
    assert run(capsys, "verify", "jm")[0] == 0


def test_backend_info(capsys):
    code, out, _ = run(capsys, "--backend-info")
    assert code == 0 and out.startswith("kernels:")


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "classim", "analytic", "--d", "4"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "0.3611" in out.stdout
