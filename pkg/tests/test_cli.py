from __future__ import annotations

import json

import numpy as np
import pytest

from fracground.cli import main
from fracground.io import read_grid_function
from fracground.verify import FAULTS, run_verify

SOLVE_1D = """\
s = 0.5
lambda = 1.0
p = 2
N = 1
kind = interval
R = 8
h = 0.1
"""

SOLVE_2D = """\
s = 0.5
lambda = 1.0
p = 1.5
N = 2
kind = disc
R = 3
h = 0.25
tol = 1e-12
"""

SWEEP_1D = """\
s = 0.5
lambda = 1.0
p = 2
N = 1
kind = interval
R = 2 4
h0 = 0.1
multistart = none
"""


def _cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", _cfg(tmp_path, SOLVE_1D), "--out", str(out)]) == 0
    for name in ("solution.fgf", "solution.csv", "solution.json", "run.json", "solution.png"):
        assert (out / name).stat().st_size > 0
    side = json.loads((out / "solution.json").read_text())
    assert set(side) == {"J", "residual", "iterations", "converged"} and side["converged"]
    f = read_grid_function(out / "solution.fgf")
    assert f.N == 1 and np.all(f.values > 0)
    assert (out / "solution.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_malformed_config_exits_one(tmp_path, capsys):
    bad = _cfg(tmp_path, "s = 0.5\nlambda 1.0\n", "bad.cfg")
    assert main(["solve", "--config", bad, "--out", str(tmp_path / "o")]) == 1
    assert "bad.cfg:2:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    ["kind = disc\n", "p = 0.5\n", "unknown = 1\n"],
)
def test_inconsistent_configs_exit_one(tmp_path, extra):
    text = SOLVE_1D.replace("kind = interval\n", "") if extra.startswith("kind") else SOLVE_1D
    if extra.startswith("p ="):
        text = text.replace("p = 2\n", "")
    assert main(["solve", "--config", _cfg(tmp_path, text + extra), "--out", str(tmp_path / "o")]) == 1


def test_unreachable_tolerance_exits_two_with_diagnostics(tmp_path):
    cfg = _cfg(tmp_path, SOLVE_1D + "tol = 1e-30\nmax_iter = 5\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 2
    run = json.loads((out / "run.json").read_text())
    assert "not converged" in run["message"] and len(run["residual_history"]) >= 5
    assert not json.loads((out / "solution.json").read_text())["converged"]


def test_spectrum_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["spectrum", "--config", _cfg(tmp_path, SOLVE_2D), "--out", str(out)]) == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "i,mu_i" and len(lines) == 5
    assert float(lines[1].split(",")[1]) < 0
    assert (out / "phi_2.fgf").exists() and (out / "eigenfunctions.png").exists()
    morse = json.loads((out / "spectrum.json").read_text())["analysis"]["morse"]
    assert morse["morse_index"] == 1


def test_multistart_cli(tmp_path):
    out = tmp_path / "o"
    assert main(["multistart", "--config", _cfg(tmp_path, SOLVE_2D + "n_seeds = 3\n"), "--out", str(out)]) == 0
    rep = json.loads((out / "multistart.json").read_text())
    assert rep["unique"] and rep["seeds"] == [0, 1, 2]
    assert (out / "multistart.png").exists()
    assert main(["multistart", "--config", _cfg(tmp_path, SOLVE_2D + "seeds = 4\n", "one.cfg"), "--out", str(out)]) == 1


def test_rescale_cli(tmp_path):
    out = tmp_path / "o"
    assert main(["rescale", "--config", _cfg(tmp_path, SOLVE_2D), "--out", str(out)]) == 0
    rep = json.loads((out / "rescale.json").read_text())
    assert rep["eps"] == pytest.approx(1 / 3) and rep["residual_ratio"] <= 10 and rep["energy_rel_error"] <= 0.01
    assert read_grid_function(out / "rescaled.fgf").R == pytest.approx(1.0)


def test_sweep_cli_outputs_and_determinism(tmp_path):
    cfg = _cfg(tmp_path, SWEEP_1D)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", cfg, "--out", str(a)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b)]) == 0
    names = ("sweep.csv", "report.json", "mu2_vs_R.dat", "cR_vs_R.dat", "mu2_vs_R.png", "cR_vs_R.png", "dist_to_Q_vs_R.png")
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    header = (a / "sweep.csv").read_text().splitlines()[0]
    assert header == "R,c_R,mu1,mu2,sym_defect_phi2,dist_to_Q,multistart_spread,degenerate"
    assert (a / "mu2_vs_R.dat").read_text().startswith("# R mu2\n")


def test_sweep_cli_rejects_bad_lists(tmp_path):
    cfg = _cfg(tmp_path, SWEEP_1D.replace("R = 2 4", "R = 4 2"))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_verify_cli_and_fault_injection(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out)]) == 0
    summary = json.loads((out / "verify.json").read_text())
    assert summary["passed"] and summary["failed"] == []
    assert all({"name", "passed", "measured", "threshold"} <= set(c) for c in summary["checks"])
    capsys.readouterr()
    assert main(["verify", "--out", str(out), "--inject-fault", "operator_symmetry"]) == 3
    assert "operator_symmetry_1d" in capsys.readouterr().err
    assert "operator_symmetry_2d" in json.loads((out / "verify.json").read_text())["failed"]


def test_verify_suite_directly():
    checks = run_verify()
    assert all(c.passed for c in checks), [c.name for c in checks if not c.passed]
    with pytest.raises(ValueError):
        run_verify("no_such_fault")
    assert FAULTS == ("operator_symmetry",)


def test_usage_errors():
    with pytest.raises(SystemExit):
        main([])
    with pytest.raises(SystemExit):
        main(["solve"])
