import csv
import io
import json
import math
import subprocess
import sys

import pytest

from oracles import rb_price_gauss_hermite
from qmcis import cli, lattice, rkhs
from qmcis.errors import ToleranceNotMet


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _cfg(tmp_path, problem, methods, n_list="64", extra="", name="exp.ini"):
    return _write(tmp_path, name, f"[problem]\n{problem}\n\n[experiment]\nmethods = {methods}\n"
                                  f"n_list = {n_list}\nshifts = 8\nseed = 3\n{extra}"
                                  f"\n[output]\ndir = {tmp_path / 'results'}\n")


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- cbc --------------------------------------------------------------------

def test_cbc_one_dimension(capsys):
    code, out, err = _run(["cbc", "--N", "64", "--d", "1"], capsys)
    assert code == 0
    assert out.splitlines()[:2] == ["64 1", "1"]
    assert "prefix 1" in err


def test_cbc_output_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (a, b):
        assert _run(["cbc", "--N", "256", "--d", "4", "--out", str(path)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    gen = lattice.GeneratingVector.read(a)
    assert gen.pod["scheme"] == "gaussian(alpha2=4.0)"


def test_cbc_matches_exhaustive_search(capsys):
    code, out, _ = _run(["cbc", "--N", "16", "--d", "2"], capsys)
    gen = lattice.GeneratingVector.from_text(out)
    w = lattice.make_pod_weights(2)
    scheme = rkhs.WeightScheme.gaussian(4.0)
    best = min(lattice.worst_case_error_sq(lattice.GeneratingVector(16, (a, b)), w, scheme)
               for a in range(1, 16, 2) for b in range(1, 16, 2))
    assert lattice.worst_case_error_sq(gen, w, scheme) <= best * (1 + 1e-12)


def test_cbc_rational_scheme(capsys):
    code, out, _ = _run(["cbc", "--N", "32", "--d", "2", "--lam", "2", "--nu", "6"], capsys)
    assert code == 0 and "rational(lam=2.0,nu=6.0)" in out


@pytest.mark.parametrize("argv", [["cbc", "--N", "48", "--d", "2"], ["cbc", "--N", "64"],
                                  ["cbc", "--N", "32768", "--d", "2"],
                                  ["cbc", "--N", "64", "--d", "2", "--alpha2", "1.5"],
                                  ["cbc", "--N", "64", "--d", "2", "--nu", "6"]])
def test_cbc_invalid_parameters_exit_2(argv, capsys):
    assert _run(argv, capsys)[0] == 2


def test_numerical_failure_exits_3(monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise ToleranceNotMet("quadrature did not converge", 0.0, 1.0)
    monkeypatch.setattr(cli, "cbc_construct", fail)
    code, _, err = _run(["cbc", "--N", "64", "--d", "2"], capsys)
    assert code == 3 and "ToleranceNotMet" in err


# --- estimate ---------------------------------------------------------------

def test_estimate_mgf_is_exact(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = synthetic:gaussian_mgf\na = 1 0", "rqmc:odis")
    code, out, _ = _run(["estimate", "--config", cfg], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["value"] == pytest.approx(math.exp(0.5), rel=1e-14)
    assert doc["exact"] == pytest.approx(math.exp(0.5), rel=1e-15)
    assert len(doc["per_shift"]) == 8 and doc["R"] == 8 and doc["seed"] == 3
    assert doc["assumptions"]["generic"]["eigenvalue"]["verdict"] == "satisfied"


def test_estimate_constant_with_monte_carlo(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = synthetic:constant\ndim = 3", "rqmc:odis")
    code, out, _ = _run(["estimate", "--config", cfg, "--method", "mc:lapis", "--N", "128"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["value"] == 1.0 and doc["rmse"] == 0.0
    assert doc["method"] == "mc" and doc["proposal"] == "lapis" and doc["N"] == 128


def test_estimate_randleman_bartter_against_quadrature(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = randleman_bartter\ndim = 5\nr0 = 0.1\nsigma = 0.01", "rqmc:lapis",
               n_list="4096")
    code, out, _ = _run(["estimate", "--config", cfg], capsys)
    doc = json.loads(out)
    oracle = rb_price_gauss_hermite(5, nodes=8)
    assert code == 0 and doc["N"] == 4096
    assert abs(doc["value"] - oracle) <= 3 * doc["rmse"]
    assert "rb_alpha_bound" in doc["assumptions"]


def test_estimate_with_vector_file(tmp_path, capsys):
    vec = tmp_path / "z.txt"
    lattice.cbc_construct(128, 2, lattice.make_pod_weights(2), rkhs.WeightScheme.gaussian(4.0)).write(vec)
    cfg = _cfg(tmp_path, "name = synthetic:gaussian_mgf\na = 0.3 0.2", "rqmc:lapis")
    code, out, _ = _run(["estimate", "--config", cfg, "--vector", str(vec)], capsys)
    assert code == 0 and json.loads(out)["N"] == 128
    bad = tmp_path / "z3.txt"
    lattice.GeneratingVector(128, (1, 3, 5)).write(bad)
    assert _run(["estimate", "--config", cfg, "--vector", str(bad)], capsys)[0] == 2


def test_estimate_overflow_exits_4(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = synthetic:gaussian_mgf\na = 300", "mc:none", n_list="4096")
    code, _, err = _run(["estimate", "--config", cfg], capsys)
    assert code == 4 and "assumption" in err


def test_estimate_seed_override(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = synthetic:sine_quadratic", "mc:odis")
    a = json.loads(_run(["estimate", "--config", cfg], capsys)[1])
    b = json.loads(_run(["estimate", "--config", cfg, "--seed", "4"], capsys)[1])
    assert b["seed"] == 4 and a["value"] != b["value"]


@pytest.mark.parametrize("command", ["estimate", "convergence", "assumptions"])
def test_commands_need_a_config(command, capsys):
    assert _run([command], capsys)[0] == 2


def test_bad_config_file_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.ini", "[problem]\nname = nothing\n[experiment]\nmethods = mc:none\n"
                                      "n_list = 8\n")
    assert _run(["estimate", "--config", cfg], capsys)[0] == 2
    assert _run(["assumptions", "--config", str(tmp_path / "absent.ini")], capsys)[0] == 2


# --- convergence ------------------------------------------------------------

def test_convergence_is_deterministic(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = randleman_bartter\ndim = 3\nr0 = 0.1\nsigma = 0.05",
               "rqmc:lapis mc:odis rqmc:student_t:20", n_list="64 128 256")
    outs = []
    for k in range(2):
        out_dir = tmp_path / f"run{k}"
        code, stdout, _ = _run(["convergence", "--config", cfg, "--out", str(out_dir)], capsys)
        assert code == 0 and "slope=" in stdout
        outs.append(out_dir)
    for name in ("convergence.csv", "convergence_fits.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = list(csv.DictReader(io.StringIO((outs[0] / "convergence.csv").read_text())))
    assert list(rows[0]) == ["method", "proposal", "N", "value", "rmse", "R", "seed", "status"]
    assert len(rows) == 9 and all(r["status"] == "ok" for r in rows)
    meta = json.loads((outs[0] / "convergence_meta.json").read_text())
    assert meta["seed"] == 3 and len(meta["config_sha256"]) == 64


def test_convergence_default_output_dir(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = synthetic:constant\ndim = 1", "mc:none", n_list="8 16")
    assert _run(["convergence", "--config", cfg], capsys)[0] == 0
    assert (tmp_path / "results" / "convergence.csv").exists()


def test_convergence_records_failures_in_band(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = synthetic:gaussian_mgf\na = 300", "mc:none rqmc:odis",
               n_list="1024 2048")
    code, _, _ = _run(["convergence", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    rows = list(csv.DictReader(open(tmp_path / "o" / "convergence.csv")))
    assert code == 0 and len(rows) == 4
    assert all(r["status"] == "overflow" for r in rows)
    fits = list(csv.DictReader(open(tmp_path / "o" / "convergence_fits.csv")))
    assert len(fits) == 2 and all(f["status"].startswith("error") for f in fits)


# --- fourier-check and assumptions ------------------------------------------

def test_fourier_check_rows(capsys):
    code, out, _ = _run(["fourier-check", "--alpha2", "3", "--h-max", "3"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["h"] for r in rows] == ["1", "2", "3"]
    scheme = rkhs.WeightScheme.gaussian(3.0)
    for r in rows:
        assert float(r["theta_hat"]) == rkhs.theta_hat(int(r["h"]), scheme)
        assert float(r["ratio"]) <= 1.0


def test_fourier_check_exit_codes(capsys):
    assert _run(["fourier-check", "--alpha2", "4", "--h-max", "16"], capsys)[0] == 5
    assert _run(["fourier-check", "--alpha2", "4", "--h-max", "16", "--constant", "chain"],
                capsys)[0] == 0
    assert _run(["fourier-check", "--alpha2", "1.5"], capsys)[0] == 2


def test_assumptions_report(tmp_path, capsys):
    cfg = _cfg(tmp_path, "name = glmm\ny = 1 3 0\nbeta = 0.2\nkappa = 0.5\nsigma = 1.0", "mc:lapis")
    code, out, _ = _run(["assumptions", "--config", cfg], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["scheme"] == "gaussian(alpha2=4.0)"
    assert {"growth", "eigenvalue", "semidefinite"} <= set(doc["generic"])
    assert set(doc["glmm_condition"]) >= {"sufficient", "necessary", "sufficient_margin"}


def test_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "qmcis.cli", "cbc", "--N", "8", "--d", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("8 2\n")
