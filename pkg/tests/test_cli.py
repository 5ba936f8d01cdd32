import json
import os
import subprocess
import sys

import pytest

from conewatch.cli import load_schema, main, validate_config, validate_summary
from conewatch.errors import ValidationError


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path), "-q"])


def _summary(tmp_path, stem):
    return json.loads((tmp_path / f"{stem}.json").read_text(encoding="utf-8"))


def test_packaged_schema_matches_docs():
    docs = os.path.join(os.path.dirname(__file__), "..", "docs", "schema.json")
    with open(docs, encoding="utf-8") as fh:
        assert json.load(fh) == load_schema()


def test_cone_info(tmp_path):
    assert _run(tmp_path, "cone-info", "--model", "linear_diag", "--x0", "1,0,1") == 0
    s = _summary(tmp_path, "cone-info_linear_diag_seed0")
    assert s["result"]["rank"] == 2
    assert s["result"]["x0_membership"]["class"] == "Boundary"
    csv_lines = (tmp_path / "cone-info_linear_diag_seed0.csv").read_text().splitlines()
    assert csv_lines[0] == "index,eigenvalue,basis_1,basis_2,basis_3"


def test_check_coop_rotation(tmp_path):
    assert _run(tmp_path, "check-coop", "--model", "rotation_counterexample") == 0
    s = _summary(tmp_path, "check-coop_rotation_counterexample_seed0")
    assert s["result"]["pass"] is False
    assert s["result"]["invariance"]["pass"] is False


def test_check_coop_linear_diag(tmp_path):
    assert _run(tmp_path, "check-coop", "--model", "linear_diag", "--grid", "5",
                "--pairs", "10") == 0
    s = _summary(tmp_path, "check-coop_linear_diag_seed0")
    assert s["result"]["pass"] is True
    assert s["result"]["lmi"]["worst_eigenvalue"] == pytest.approx(-0.5)


def test_classify(tmp_path):
    assert _run(tmp_path, "classify", "--model", "limit_cycle_3d", "--x0", "0.5,0,0.5") == 0
    s = _summary(tmp_path, "classify_limit_cycle_3d_seed0")
    assert s["result"]["omega_class"] == "PeriodicOrbit"
    assert s["result"]["period"] == pytest.approx(6.283185, abs=1e-2)
    assert any("complemented" in a for a in s["result"]["assumptions"])
    traj = (tmp_path / "classify_limit_cycle_3d_seed0_trajectory.csv").read_text()
    assert traj.startswith("t,x1,x2,x3\n")


def test_classify_blowup_exit_3(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "command": "classify",
        "model": {"name": "riccati", "kind": "polynomial", "monomials": [[2, 0], [0, 1]],
                  "coefficients": [[1.0, 0.0], [0.0, -1.0]]},
        "cone": {"eigenvalues": [-1.0, 1.0]},
        "x0": [1.0, 0.5],
    }))
    assert _run(tmp_path, "classify", "--config", str(cfg)) == 3
    s = _summary(tmp_path, "classify_riccati_seed0")
    assert s["exit_status"] == 3 and "BlowUp" in s["result"]["note"]


def test_sweep_assert_theorem_a(tmp_path, capsys):
    code = _run(tmp_path, "sweep", "--model", "limit_cycle_3d", "--n", "20", "--seed", "7",
                "--assert-theorem-A", "0.99", "--assert-theorem-B")
    assert code == 0
    assert "fraction_Q_union_S = 1.000000" in capsys.readouterr().out
    s = _summary(tmp_path, "sweep_limit_cycle_3d_seed7")
    assert s["result"]["fraction_Q_union_S"] == 1.0
    assert s["result"]["pb_check"]["violations"] == []
    assert (tmp_path / "sweep_limit_cycle_3d_seed7.log").exists()


def test_sweep_assert_fails_exit_4(tmp_path):
    # with a one-unit horizon nothing converges or closes up: everything is unresolved
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "command": "sweep", "model": "may_leonard", "n_points": 5,
        "box": [[0.1, 1.0], [0.1, 1.0], [0.1, 1.0]],
        "classifier": {"transient": 0.5, "tail_window": 0.5, "extend_once": False},
    }))
    assert _run(tmp_path, "sweep", "--config", str(cfg), "--assert-theorem-A", "0.99") in (0, 4)
    s = _summary(tmp_path, "sweep_may_leonard_seed0")
    frac = s["result"]["fraction_Q_union_S"]
    assert (s["exit_status"] == 4) == (frac < 0.99)
    assert _run(tmp_path, "sweep", "--config", str(cfg), "--assert-theorem-B") == 4


def test_missing_box_names_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "sweep", "model": "linear_diag", "n_points": 3}))
    assert _run(tmp_path, "sweep", "--config", str(cfg)) == 2
    assert "'box'" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "classify", "model": "linear_diag",
                               "x0": [1, 2, 3], "colour": "blue"}))
    assert _run(tmp_path, "classify", "--config", str(cfg)) == 2
    assert "colour" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "classify", "model": "linear_diag",
                               "x0": [1, 0, 0], "master_seed": 1}))
    assert _run(tmp_path, "classify", "--config", str(cfg), "--x0", "0,0,1") == 0
    s = _summary(tmp_path, "classify_linear_diag_seed1")
    assert s["config"]["x0"] == [0.0, 0.0, 1.0]
    assert s["result"]["in_Q"] is False


def test_unknown_model_exit_2(tmp_path):
    assert _run(tmp_path, "classify", "--model", "lorenz", "--x0", "1,2,3") == 2


def test_bad_dimension_exit_2(tmp_path):
    assert _run(tmp_path, "classify", "--model", "linear_diag", "--x0", "1,2") == 2


def test_lyapunov(tmp_path):
    assert _run(tmp_path, "lyapunov", "--model", "linear_diag", "--x0", "1,0.5,0.3",
                "--k", "2") == 0
    s = _summary(tmp_path, "lyapunov_linear_diag_seed0")
    assert s["result"]["exponents"] == pytest.approx([-1, -1, -3], abs=1e-2)
    assert s["result"]["separation"]["E_in_interior"] is True


def test_lyapunov_gap_too_small_exit_3(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "command": "lyapunov",
        "model": {"name": "flat", "kind": "polynomial", "monomials": [[1, 0], [0, 1]],
                  "coefficients": [[-1.0, 0.0], [0.0, -1.0]]},
        "cone": {"eigenvalues": [-1.0, 1.0]}, "x0": [1.0, 1.0], "k": 1,
    }))
    assert _run(tmp_path, "lyapunov", "--config", str(cfg)) == 3


def test_probe(tmp_path):
    assert _run(tmp_path, "probe", "--model", "limit_cycle_3d", "--x0", "0,0,1",
                "--eps", "0.1", "--m", "5") == 0
    assert _summary(tmp_path, "probe_limit_cycle_3d_seed0")["result"]["fraction_in_Q"] == 1.0


def test_summaries_revalidate(tmp_path):
    _run(tmp_path, "cone-info", "--model", "may_leonard")
    _run(tmp_path, "sweep", "--model", "linear_diag", "--n", "3")
    for path in tmp_path.glob("*.json"):
        summary = json.loads(path.read_text(encoding="utf-8"))
        validate_summary(summary)
        validate_config(summary["config"])


def test_byte_identical_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, jobs in ((a, "1"), (b, "2")):
        assert main(["sweep", "--model", "limit_cycle_3d", "--n", "12", "--seed", "3",
                     "--jobs", jobs, "--out", str(out), "-q"]) == 0
    name = "sweep_limit_cycle_3d_seed3.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_env_jobs_override(tmp_path, monkeypatch):
    from conewatch.cli import resolve_jobs
    monkeypatch.setenv("CONEWATCH_JOBS", "3")
    assert resolve_jobs({"jobs": 8}) == 3
    monkeypatch.setenv("CONEWATCH_JOBS", "zero")
    with pytest.raises(ValidationError):
        resolve_jobs({})
    monkeypatch.delenv("CONEWATCH_JOBS")
    assert resolve_jobs({"jobs": 2}) == 2


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "conewatch.cli", "cone-info", "--model",
                           "linear_diag", "--out", str(tmp_path), "-q"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "conewatch.cli", "sweep"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
