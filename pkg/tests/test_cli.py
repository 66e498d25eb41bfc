import csv
import json
import os
import subprocess
import sys

import pytest

from hylosol.cli import load_config, main
from hylosol.fieldio import read_field

HERE = os.path.dirname(__file__)
GOLDEN = os.path.join(HERE, "golden")


def _write(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# config_hash=") and "version=" in lines[0]
    return list(csv.DictReader(lines[1:]))


SOLVE = {
    "physics": {"q": 0.01, "model": {"E0": 1.0, "mu": 1.0, "p": 3.0}},
    "grid": {"kind": "radial", "n": 512, "r_max": 30.0},
    "solve": {"c": 20.0},
}


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "solve" in capsys.readouterr().out
    out = subprocess.run([sys.executable, "-m", "hylosol", "sweep", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "--no-warm-start" in out.stdout


def test_missing_config_exits_one(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_bad_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"physics": {\n  "q": 0.1,,\n}}')
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("patch, needle", [
    ({"solve": {"c": -1.0}}, "solve.c"),
    ({"physics": {"q": 0.0, "model": {"p": 3.5}}}, "W-iv"),
    ({"grid": {"kind": "hex"}}, "grid.kind"),
    ({"minimizer": {"tau": 0.0}}, "minimizer"),
    ({"minimizer": {"speed": 2}}, "unknown field"),
])
def test_invalid_config_exits_one(tmp_path, capsys, patch, needle):
    doc = dict(SOLVE, **patch)
    assert main(["solve", "--config", _write(tmp_path, doc), "--out", str(tmp_path)]) == 1
    assert needle in capsys.readouterr().err


def test_unwritable_output_exits_one(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _write(tmp_path, SOLVE)
    assert main(["solve", "--config", cfg, "--out", str(blocker / "sub")]) == 1


def test_solve_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, SOLVE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--out", str(a)]) == 0
    assert main(["solve", "--config", cfg, "--out", str(b)]) == 0
    rows = _read_csv(a / "family.csv")
    assert len(rows) == 1 and float(rows[0]["residual"]) < 1e-7
    assert float(rows[0]["c"]) == pytest.approx(20.0)
    assert (a / "family.csv").read_bytes() == (b / "family.csv").read_bytes()
    u = read_field(a / "u_0000.hfd")
    assert u.grid.n == 512
    digest = load_config(cfg).digest
    assert (a / "family.csv").read_text().startswith(f"# config_hash={digest}, version=")


def test_solve_non_convergence_exits_two(tmp_path):
    doc = dict(SOLVE, minimizer={"max_iter": 3})
    out = tmp_path / "o"
    assert main(["solve", "--config", _write(tmp_path, doc), "--out", str(out)]) == 2
    rows = _read_csv(out / "family.csv")
    assert "not converged" in rows[0]["iterations"]


def test_golden_sweep_regression(tmp_path):
    out = tmp_path / "g"
    assert main(["sweep", "--config", os.path.join(GOLDEN, "config.json"),
                 "--out", str(out)]) == 0
    got = _read_csv(out / "family.csv")
    want = _read_csv(os.path.join(GOLDEN, "family.csv"))
    assert len(got) == len(want) == 5
    for g, w in zip(got, want):
        for col in ("delta", "c", "E", "Lambda", "omega", "Phi", "E_plus_aCs"):
            assert float(g[col]) == pytest.approx(float(w[col]), rel=1e-6, abs=1e-9), col
        assert float(g["residual"]) < 1e-7
    report = json.loads((out / "monotonicity_report.json").read_text())
    assert all(v["passed"] for v in report["chains"].values())


def test_sweep_without_warm_start_in_threads(tmp_path):
    doc = dict(SOLVE, sweep={"charges": [10.0, 20.0, 30.0]})
    out = tmp_path / "s"
    assert main(["sweep", "--config", _write(tmp_path, doc), "--out", str(out),
                 "--no-warm-start", "--threads", "3"]) == 0
    rows = _read_csv(out / "family.csv")
    lams = [float(r["Lambda"]) for r in rows]
    assert lams[0] > lams[1] > lams[2]


def test_sweep_with_vanishing_entry_exits_two(tmp_path):
    doc = dict(SOLVE, sweep={"deltas": [0.001, 0.05], "seed_charge": 20.0})
    out = tmp_path / "v"
    assert main(["sweep", "--config", _write(tmp_path, doc), "--out", str(out)]) == 2
    rep = json.loads((out / "monotonicity_report.json").read_text())
    assert rep["status"] == ["ok", "vanishing iterate"]


def test_hylomorphy_command(tmp_path):
    doc = {"physics": {"q": 0.001}, "hylomorphy": {}}
    out = tmp_path / "h"
    assert main(["hylomorphy", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["certified"] and cert["q_threshold"] > 0.001
    rows = _read_csv(out / "hylomorphy.csv")
    assert list(rows[0]) == ["R", "Lambda", "kinetic", "V_term", "N_term", "field_term",
                             "certified"]


def test_check_command(tmp_path, capsys):
    doc = {"physics": {"q": 0.01}}
    assert main(["check", "--config", _write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_evolve_command(tmp_path):
    doc = {
        "physics": {"q": 0.05},
        "evolve": {"grid": {"n": 32, "L": 16.0}, "c": 12.0, "dt": 5e-3, "T": 0.2,
                   "stride": 10, "eta": 0.01, "seed": 4,
                   "radial_seed": {"n": 512, "r_max": 20.0}},
    }
    out = tmp_path / "e"
    assert main(["evolve", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["seed"] == 4 and verdict["verdict"] == "stable-at-desk-scale"
    assert verdict["control_verdict"] in ("dispersal", "no-dispersal")
    rows = _read_csv(out / "trace.csv")
    assert list(rows[0]) == ["t", "E", "C", "liapunov", "orbit_distance", "max_abs_psi"]
    assert len(rows) == 5
    assert (out / "control_trace.csv").exists()
    assert read_field(out / "soliton.hfd").grid.n == (32, 32, 32)


def test_bad_seed_rejected(tmp_path):
    cfg = _write(tmp_path, SOLVE)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--seed", "-1"]) == 1
