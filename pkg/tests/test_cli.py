import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard_lab import RadialField, make_grid, model_soliton, riesz_radial
from choquard_lab.cli import main


def run(argv):
    return main(argv)


def test_solve_model_writes_artifacts(tmp_path):
    code = run(["solve", "--model", "--d", "1", "--p", "3",
                "--r-max", "15", "--n", "1200", "--stretch", "1.0",
                "--out-dir", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "Q.json").exists()
    assert (tmp_path / "Q.csv").exists()
    data = np.loadtxt(tmp_path / "Q.csv", delimiter=",", skiprows=1)
    mask = data[:, 0] <= 10.0
    exact = model_soliton(3.0, data[mask, 0])
    assert np.max(np.abs(data[mask, 1] - exact)) <= 1e-5


def test_solve_rejects_bad_alpha(tmp_path, capsys):
    code = run(["solve", "--d", "3", "--alpha", "5", "--p", "2",
                "--out-dir", str(tmp_path)])
    assert code == 1
    assert "alpha outside (0,d)" in capsys.readouterr().err


def test_solve_missing_args(tmp_path):
    assert run(["solve", "--out-dir", str(tmp_path)]) == 1


def test_solve_nonconvergence_exit_code(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"max_iter": 2},
                               "grid": {"n": 300, "r_max": 25.0}}))
    code = run(["solve", "--d", "3", "--alpha", "1", "--p", "2",
                "--config", str(cfg), "--out-dir", str(tmp_path),
                "--tol", "1e-10"])
    assert code == 2


def test_determinism(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for out in (d1, d2):
        assert run(["solve", "--d", "3", "--alpha", "1", "--p", "2",
                    "--n", "300", "--out-dir", str(out)]) == 0
    assert (d1 / "Q.csv").read_bytes() == (d2 / "Q.csv").read_bytes()
    assert (d1 / "Q.json").read_bytes() == (d2 / "Q.json").read_bytes()


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("state")
    code = run(["solve", "--d", "3", "--alpha", "1", "--p", "2",
                "--n", "500", "--out-dir", str(out)])
    assert code == 0
    return out


def test_verify_passes_on_good_state(solved_dir, capsys):
    code = run(["verify", str(solved_dir / "Q"),
                "--identity-tol", "1e-3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out and "FAIL" not in out


def test_verify_fails_on_corrupted_profile(solved_dir, tmp_path, capsys):
    import shutil
    shutil.copy(solved_dir / "Q.json", tmp_path / "Q.json")
    data = np.loadtxt(solved_dir / "Q.csv", delimiter=",", skiprows=1)
    data[60:80, 1] *= 1.3  # hand-corrupt the profile
    header = "r,value"
    np.savetxt(tmp_path / "Q.csv", data, delimiter=",", header=header,
               comments="", fmt="%.17g")
    code = run(["verify", str(tmp_path / "Q"), "--identity-tol", "1e-3"])
    assert code == 2
    assert "FAIL" in capsys.readouterr().out


def test_verify_missing_file(tmp_path):
    assert run(["verify", str(tmp_path / "nope")]) == 1


def test_spectrum_verdict(solved_dir, tmp_path):
    code = run(["spectrum", str(solved_dir / "Q"), "--out-dir", str(tmp_path),
                "--k", "4"])
    assert code == 0
    rep = json.loads((tmp_path / "spectral_report.json").read_text())
    assert rep["radial_kernel_trivial"] is True
    assert rep["translation_mode_found"] is True


def test_spectrum_zero_field(tmp_path):
    code = run(["spectrum", "--zero-field", "--d", "3", "--n", "300",
                "--r-max", "30", "--stretch", "1.0",
                "--out-dir", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "spectral_report.json").read_text())
    assert rep["zero_field"] is True
    assert rep["eigenvalues"][0] >= 0.95


def test_spectrum_unsupported_sector(solved_dir, tmp_path):
    assert run(["spectrum", str(solved_dir / "Q"), "--ell", "2",
                "--out-dir", str(tmp_path)]) == 1


def test_sweep_writes_csv_manifest_and_resumes(tmp_path, capsys):
    args = ["sweep", "--d", "3", "--alphas", "0.99", "1.0",
            "--ps", "2.0", "--n", "300", "--out-dir", str(tmp_path)]
    assert run(args) == 0
    csv_text = (tmp_path / "sweep.csv").read_text()
    manifest = json.loads((tmp_path / "sweep_manifest.json").read_text())
    assert len(manifest["points"]) == 2
    assert all(pt["converged"] for pt in manifest["points"])
    capsys.readouterr()
    # idempotent resume: completed manifest short-circuits the run
    assert run(args) == 0
    assert "already complete" in capsys.readouterr().out
    assert (tmp_path / "sweep.csv").read_text() == csv_text


def test_sweep_resumes_from_partial_manifest(tmp_path):
    args = ["sweep", "--d", "3", "--alphas", "0.99", "1.0",
            "--ps", "2.0", "--n", "300", "--out-dir", str(tmp_path)]
    assert run(args) == 0
    manifest = json.loads((tmp_path / "sweep_manifest.json").read_text())
    full_csv = (tmp_path / "sweep.csv").read_text()
    # drop one completed point and resume; the merged result is identical
    manifest["points"] = manifest["points"][:1]
    (tmp_path / "sweep_manifest.json").write_text(json.dumps(manifest))
    assert run(args) == 0
    merged = json.loads((tmp_path / "sweep_manifest.json").read_text())
    assert len(merged["points"]) == 2
    assert (tmp_path / "sweep.csv").read_text() == full_csv


def test_sweep_empty_lattice(tmp_path):
    assert run(["sweep", "--d", "3", "--alphas", "--ps", "2.0",
                "--out-dir", str(tmp_path)]) == 1


def test_riesz_verb_matches_direct_call(tmp_path):
    grid = make_grid(3, 10.0, 400, 1.0)
    fld = RadialField(grid, np.exp(-grid.nodes ** 2))
    src = tmp_path / "profile.csv"
    fld.to_csv(src)
    code = run(["riesz", str(src), "--d", "3", "--alpha", "1",
                "--out-dir", str(tmp_path)])
    assert code == 0
    got = np.loadtxt(tmp_path / "potential.csv", delimiter=",", skiprows=1)
    want = riesz_radial(grid, fld, 1.0).values
    assert_allclose(got[:, 1], want, rtol=1e-12, atol=1e-14)


def test_riesz_verb_needs_args(tmp_path):
    grid = make_grid(3, 10.0, 64, 1.0)
    src = tmp_path / "p.csv"
    RadialField(grid, np.exp(-grid.nodes)).to_csv(src)
    assert run(["riesz", str(src)]) == 1


def test_outputs_stay_inside_out_dir(tmp_path, monkeypatch):
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    outdir = tmp_path / "out"
    monkeypatch.chdir(workdir)
    assert run(["solve", "--model", "--d", "1", "--p", "3", "--n", "600",
                "--r-max", "12", "--stretch", "1.0",
                "--out-dir", str(outdir)]) == 0
    assert not list(workdir.iterdir())
    assert (outdir / "Q.json").exists()
