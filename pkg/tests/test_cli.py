import csv
import json

import numpy as np
import pytest

from hermitian_ma.cli import SCHEMA, main
from hermitian_ma.fieldio import load_field


def _cfg(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _report(out):
    return json.loads((out / "report.json").read_text())


def _strip(rep):
    rep = dict(rep)
    rep.pop("timing")
    return rep


FLAT = "task: solve\ngrid: {n: 2, res: 8}\nmetric: flat\nrhs: constant\nlam: 1.0\n"


def test_flat_solve(tmp_path):
    out = tmp_path / "o"
    code = main(["solve", "--config", _cfg(tmp_path, FLAT), "--out", str(out), "--dump-fields", "-q"])
    assert code == 0
    rep = _report(out)
    assert rep["schema"] == SCHEMA and rep["status"] == "pass" and rep["exit_code"] == 0
    assert rep["result_tag"] == "lambda-positive-newton" and len(rep["config_sha256"]) == 64
    assert rep["result"]["solve"]["residual"] <= 1e-10
    phi, _ = load_field(out / "fields" / "phi.json")
    assert np.all(phi.full() == 0.0)
    assert "fields/phi.bin" in rep["artifacts"] and "continuation.csv" in rep["artifacts"]
    assert set(rep["timing"]) >= {"solve_s", "total_s"}


def test_solve_zero_manufactured(tmp_path):
    text = ("task: solve-zero\nseed: 5\ngrid: {n: 2, res: 16}\n"
            "metric: {name: perturbed-diagonal, params: {amplitude: 0.3, offdiag: 0.2}}\n"
            "rhs: manufactured\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", _cfg(tmp_path, text), "--out", str(out), "-q"]) == 0
    rep = _report(out)
    assert abs(rep["result"]["c"] - 1) <= 1e-3
    assert rep["result"]["manufactured_error"] <= 1e-4


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["solve"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["teleport", "--config", "x"])
    assert err.value.code == 1
    bad = _cfg(tmp_path, FLAT.replace("res: 8", "res: 10"))
    assert main(["solve", "--config", bad, "--out", str(tmp_path / "o")]) == 1
    assert f"{bad}:2:" in capsys.readouterr().err
    assert main(["flow", "--config", _cfg(tmp_path, FLAT, "b.yaml")]) == 1
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["solve", "--config", bad, "--threads", "0"]) == 1


def test_numerical_failure_exit_2_with_partial_artifacts(tmp_path):
    text = ("task: solve\ngrid: {n: 1, res: 16}\nmetric: flat\n"
            "rhs: {name: bump, params: {height: 50.0, width: 0.05}}\nsolver: {max_newton: 1}\n")
    out = tmp_path / "o"
    code = main(["solve", "--config", _cfg(tmp_path, text), "--out", str(out), "--dump-fields", "-q"])
    assert code == 2
    rep = _report(out)
    assert rep["status"] == "failed" and rep["messages"]
    assert "partial" in rep["result"]
    assert (out / "fields" / "last_iterate.json").exists()


def test_flagged_flow_exit_2(tmp_path):
    text = ("task: flow\ngrid: {n: 1, res: 16}\nmetric: {name: perturbed-diagonal, params: {amplitude: 0.3}}\n"
            "beta: flat\nrhs: bump\nflow: {t_end: 0.5, agreement_tol: 1.0e-6}\n")
    out = tmp_path / "o"
    assert main(["flow", "--config", _cfg(tmp_path, text), "--out", str(out), "-q"]) == 2
    rep = _report(out)
    assert rep["status"] == "flagged" and any("differ" in f for f in rep["flags"])
    rows = list(csv.reader((out / "flow_trace.csv").open()))
    assert rows[0][0] == "time" and len(rows) > 2


def test_reports_deterministic_across_runs_and_threads(tmp_path):
    text = ("task: solve\nseed: 2\ngrid: {n: 2, res: 16}\n"
            "metric: {name: perturbed-diagonal, params: {amplitude: 0.3, offdiag: 0.2}}\n"
            "rhs: manufactured\n")
    cfg = _cfg(tmp_path, text)
    reps = []
    for i, threads in enumerate(("1", "1", "2")):
        out = tmp_path / f"o{i}"
        assert main(["solve", "--config", cfg, "--out", str(out), "--threads", threads, "-q",
                     "--dump-fields"]) == 0
        reps.append(_report(out))
        assert (out / "fields" / "phi.bin").exists()
    assert _strip(reps[0]) == _strip(reps[1]) == _strip(reps[2])
    blobs = [(tmp_path / f"o{i}" / "fields" / "phi.bin").read_bytes() for i in range(3)]
    assert blobs[0] == blobs[1] == blobs[2]


def test_overrides_change_the_hash(tmp_path):
    cfg = _cfg(tmp_path, FLAT)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "a"), "-q"]) == 0
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "b"), "-q", "--set", "lam=2.0"]) == 0
    a, b = _report(tmp_path / "a"), _report(tmp_path / "b")
    assert a["config_sha256"] != b["config_sha256"] and b["config"]["lam"] == 2.0


def test_verify_selected_diagnostics(tmp_path):
    text = ("task: verify\nseed: 0\ngrid: {n: 2, res: 16}\n"
            "metric: {name: perturbed-diagonal, params: {amplitude: 0.3, offdiag: 0.2}}\n"
            "beta: {name: degenerate-beta, params: {depth: 0.5}}\n"
            "verify:\n  diagnostics: [trace, mixed_type, mass_estimate, curvature]\n"
            "  samples: {trace: 1000, mixed_type: 5}\n")
    out = tmp_path / "o"
    assert main(["verify", "--config", _cfg(tmp_path, text), "--out", str(out), "-q"]) == 0
    rep = _report(out)
    d = rep["result"]["diagnostics"]
    assert set(d) == {"trace", "mixed_type", "mass_estimate", "curvature"}
    assert all(r["passed"] for r in d.values())
    assert d["trace"]["samples"] == 1000
    rows = list(csv.reader((out / "diagnostics.csv").open()))
    assert rows[0] == ["name", "samples", "worst_margin", "passed"] and len(rows) == 5
    assert (out / "mass_estimate.csv").exists()


def test_concentrate(tmp_path):
    text = ("task: concentrate\ngrid: {n: 1, res: 64}\nmetric: flat\nbeta: flat\n"
            "concentration: {points: [[0.5, 0.5]], eps_grid_spacings: [8]}\n")
    out = tmp_path / "o"
    assert main(["concentrate", "--config", _cfg(tmp_path, text), "--out", str(out), "-q"]) == 0
    rep = _report(out)["result"]["report"]
    assert rep["passed"]
    rows = list(csv.reader((out / "concentration_slopes.csv").open()))
    assert rows[0] == ["eps", "point", "tau", "slope"]
    assert abs(float(rows[1][3]) / float(rows[1][2]) - 1) <= 0.05


@pytest.mark.slow
def test_verify_all_default_diagnostics(tmp_path):
    text = ("task: verify\nseed: 0\ngrid: {n: 2, res: 16}\n"
            "metric: {name: perturbed-diagonal, params: {amplitude: 0.3, offdiag: 0.2}}\n"
            "beta: {name: degenerate-beta, params: {depth: 0.5}}\n")
    out = tmp_path / "o"
    assert main(["verify", "--config", _cfg(tmp_path, text), "--out", str(out), "-q"]) == 0
    d = _report(out)["result"]["diagnostics"]
    assert len(d) == 14 and all(r["passed"] for r in d.values())
