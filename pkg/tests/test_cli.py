"""Batch front-end: config parsing, products, manifests, exit codes."""

import json

import pytest

from stericpnp.cli import main

SYM_MODEL = """\
[model]
z1 = 1
z2 = -1
g11 = 2.0
g22 = 2.0
g12 = 3.5
cbar1 = 1.0
cbar2 = 1.0
"""


def _write(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def test_onset_products_and_manifest(tmp_path):
    cfg = _write(tmp_path, SYM_MODEL)
    out = tmp_path / "out"
    assert main(["onset", cfg, "--out", str(out)]) == 0
    data = json.loads((out / "onset.json").read_text())
    assert data["sigma_c"] == pytest.approx(0.03125, abs=1e-4)
    assert data["k_c"] == pytest.approx(2.8284, abs=1e-3)
    assert data["g12_crit"] == pytest.approx(3.0, rel=1e-9)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "onset"
    assert "onset.json" in man["outputs"]
    assert len(man["config_sha256"]) == 64
    assert man["overrides"] == []


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, SYM_MODEL + "\n[onset]\nnewton_stepz = 3\n")
    assert main(["onset", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "newton_stepz" in err


def test_unknown_section_is_a_config_error(tmp_path):
    cfg = _write(tmp_path, SYM_MODEL + "\n[onzet]\nfoo = 1\n")
    assert main(["onset", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["onset", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 2


def test_no_onset_maps_to_regime_exit(tmp_path):
    cfg = _write(tmp_path, SYM_MODEL.replace("g12 = 3.5", "g12 = 2.8"))
    assert main(["onset", cfg, "--out", str(tmp_path / "o")]) == 4


def test_set_override_recorded_and_applied(tmp_path):
    cfg = _write(tmp_path, SYM_MODEL)
    out = tmp_path / "o"
    code = main(["onset", cfg, "--set", "model.g12=3.2", "--out", str(out)])
    assert code == 0
    data = json.loads((out / "onset.json").read_text())
    # sigma_c = (g12 - 3)^2 / 32 at the symmetric point
    assert data["sigma_c"] == pytest.approx(0.005, rel=1e-6)
    man = json.loads((out / "manifest.json").read_text())
    assert man["overrides"] == ["model.g12=3.2"]


def test_trajectory_products(tmp_path):
    body = SYM_MODEL + "\n[trajectory]\nc1_0 = 2.0\nc2_0 = 2.01\n"
    cfg = _write(tmp_path, body)
    out = tmp_path / "o"
    assert main(["trajectory", cfg, "--out", str(out)]) == 0
    info = json.loads((out / "trajectory.json").read_text())
    assert info["classification"] == "III"
    assert info["d_at_neutral"] == pytest.approx(-6.0062322148620435, rel=1e-8)
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.split(",")[:3] == ["c2", "c1", "det_hessian"]


def test_csv_reruns_are_bit_identical(tmp_path):
    body = SYM_MODEL + "\n[dispersion]\nk_min = 0.2\nk_max = 6.0\ncount = 40\nsigma = 0.02\n"
    cfg = _write(tmp_path, body)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["dispersion", cfg, "--out", str(out1)]) == 0
    assert main(["dispersion", cfg, "--out", str(out2)]) == 0
    assert (out1 / "dispersion.csv").read_bytes() == (out2 / "dispersion.csv").read_bytes()


def test_evolve_seed_lands_in_manifest(tmp_path):
    body = SYM_MODEL + (
        "\n[domain]\nl = 1.1107207345395915\n"
        "[grid]\nn = 48\n"
        "[evolve]\nt_end = 2.0\nbc = periodic\nperturb_amp = 1e-3\nperturb_seed = 9\n"
    )
    cfg = _write(tmp_path, body.replace("g12 = 3.5", "g12 = 3.5\nsigma = 0.06"))
    out = tmp_path / "o"
    assert main(["evolve", cfg, "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["perturb_seed"] == 9
    info = json.loads((out / "evolve.json").read_text())
    assert info["verdict"] in {"Steady", "Running"}
    rows = (out / "timeseries.csv").read_text().splitlines()
    assert rows[0].split(",") == ["t", "energy", "mass1", "mass2"]
    assert len(rows) >= 3


def test_energy_command_reports_segregation(tmp_path):
    body = SYM_MODEL + "\n[energy]\nc1 = 0.65\nc2 = 0.42\nn_freq = 1\n"
    cfg = _write(tmp_path, body)
    out = tmp_path / "o"
    assert main(["energy", cfg, "--out", str(out)]) == 0
    data = json.loads((out / "energy.json").read_text())
    assert data["det_hessian"] == pytest.approx(3.2518315018315, rel=1e-10)
    assert data["g12_crit"] == pytest.approx(3.0, rel=1e-9)
    assert data["convex"] == 0
    assert data["eig_min"] == pytest.approx(-1.5, abs=1e-12)
    seg_header = (out / "segregated.csv").read_text().splitlines()[0]
    assert "entropy" in seg_header
