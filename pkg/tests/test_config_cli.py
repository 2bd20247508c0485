import json
import math

import numpy as np
import pytest

from qndsim import cli
from qndsim.config import load_config, parse_config, parse_document
from qndsim.errors import ConfigError, SolverError
from qndsim.io import read_csv
from qndsim.spectral import DoubleWell, compute_spectrum, reformation_time


def run(argv):
    return cli.main(argv)


# configuration documents

def test_minimal_document_defaults():
    cfg = parse_config("experiment = qnd-harmonic\n")
    assert cfg.mode == "linear"
    assert cfg.M == 32
    assert cfg.seed == 0
    assert cfg.potential_kind == "harmonic"


def test_bistable_defaults():
    cfg = parse_config("", "squid-scan")
    assert cfg.potential_kind == "double_well"
    assert cfg.M == 16 and cfg.hbar == 1.0


def test_negative_lambda_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment = squid-scan\npotential.lambda = -1\n")
    assert info.value.field == "potential.lambda"
    assert "lambda > 0" in str(info.value)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError) as info:
        parse_document("kernel.da = 1\nkernel.da = 2\n")
    assert info.value.field == "kernel.da" and "duplicate" in str(info.value)


@pytest.mark.parametrize("text, field", [
    ("kernel.width = 1", "kernel.width"),
    ("experiment = qnd-harmonic\nsequence.N = two", "sequence.N"),
    ("experiment = qnd-harmonic\nsequence.mode = quadratic", "sequence.mode"),
    ("experiment = qnd-harmonic\nkernel.da = 0", "kernel.da"),
    ("experiment = sequence\nsequence.N = 2", "sequence.dT"),
    ("experiment = spectrum\ngrid.x_min = -5", "grid.x_max"),
    ("experiment = spectrum\ngrid.x_min = -5\ngrid.x_max = 5\ngrid.n = 100", "grid.n"),
    ("experiment = coupled\ncoupled.gamma = 5", "coupled.gamma"),
    ("experiment = qnd-harmonic\npotential.kind = double_well", "potential.kind"),
    ("", "experiment"),
])
def test_invalid_documents_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field


def test_comments_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# oscillator\nexperiment = qnd-harmonic  # trailing\nseed = 3\n")
    cfg = load_config(path, "qnd-harmonic", {"seed": "9"})
    assert cfg.seed == 9
    with pytest.raises(ConfigError):
        load_config(path, "squid-scan")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_config_hash_tracks_content():
    a = parse_config("experiment = spectrum\nspectral.M = 10")
    b = parse_config("spectral.M = 10\nexperiment = spectrum")
    c = parse_config("experiment = spectrum\nspectral.M = 11")
    assert a.digest() == b.digest() != c.digest()


# dispatch and exit codes

def test_spectrum_csv_matches_oracle(tmp_path):
    assert run(["spectrum", "--set", "spectral.M=10", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "energies.csv")
    assert header == ["index", "energy"] and rows.shape == (10, 2)
    exact = np.arange(10) + 0.5
    assert np.max(np.abs(rows[:, 1] - exact) / exact) < 1e-6
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    listed = {f["path"] for f in manifest["files"]}
    assert listed == {"energies.csv", "states.csv"}
    for name in listed:
        assert (tmp_path / name).exists()
    assert manifest["seed"] == 0 and manifest["summary"]["mode"] == "linear"


def test_determinism_and_thread_invariance(tmp_path):
    args = ["qnd-harmonic", "--set", "scan.points=8", "--set", "sequence.N=3",
            "--seed", "17"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    a = (tmp_path / "a" / "curve.csv").read_bytes()
    b = (tmp_path / "b" / "curve.csv").read_bytes()
    assert a == b
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"] and ma["config_hash"] == mb["config_hash"]


def test_squid_scan_default_manifest(tmp_path):
    assert run(["squid-scan", "--out", str(tmp_path), "--threads", "4"]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert [f["path"] for f in manifest["files"]] == ["curve.csv"]
    spec = compute_spectrum(DoubleWell(), 16, 1.0, richardson=True)
    assert manifest["summary"]["T12"] == pytest.approx(reformation_time(spec, 1, 2),
                                                       rel=1e-9)
    _, rows = read_csv(tmp_path / "curve.csv")
    assert rows.shape == (96, 4)
    assert rows[-1, 0] == pytest.approx(2.5 * manifest["summary"]["T12"])


def test_config_error_exit_code(tmp_path, capsys):
    code = run(["leggett-garg", "--set", "potential.lambda=-1", "--out", str(tmp_path)])
    assert code == 2
    assert "potential.lambda" in capsys.readouterr().err
    assert not (tmp_path / "manifest.json").exists()


def test_bad_override_and_seed(capsys):
    assert run(["spectrum", "--set", "nonsense"]) == 2
    assert run(["spectrum", "--seed", "-1"]) == 2
    assert run(["spectrum", "--threads", "0"]) == 2


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise SolverError("levels did not converge", 1e-3)
    monkeypatch.setattr(cli, "compute_spectrum", boom)
    assert run(["spectrum", "--out", str(tmp_path)]) == 3


def test_degenerate_run_keeps_partial_artifacts(tmp_path, capsys):
    code = run(["sequence", "--out", str(tmp_path), "--set", "kernel.kind=window",
                "--set", "kernel.da=0.2", "--set", "sequence.N=2",
                "--set", "sequence.dT=1.0", "--set", "sequence.policy=fixed",
                "--set", "sequence.results=0.0, 0.1, 40.0"])
    assert code == 4
    assert "annihilated" in capsys.readouterr().err
    _, rows = read_csv(tmp_path / "record.csv")
    np.testing.assert_allclose(rows[:, 2], [0.0, 0.1])
    assert not (tmp_path / "manifest.json").exists()


def test_leggett_garg_report(tmp_path):
    assert run(["leggett-garg", "--out", str(tmp_path), "--set", "spectral.hbar=0.2",
                "--set", "lg.trials=300", "--set", "spectral.M=8"]) == 0
    report = json.loads((tmp_path / "lg_report.json").read_text())
    for key in ("C12", "C23", "C13", "K", "se_K", "violation", "zero_results", "T12"):
        assert key in report
    header, rows = read_csv(tmp_path / "lg_trials.csv")
    assert header[:4] == ["trial", "q1", "q2", "q3"] and rows.shape[0] == 300


def test_coupled_trace(tmp_path):
    assert run(["coupled", "--out", str(tmp_path), "--set", "coupled.n1=10",
                "--set", "coupled.n2=10", "--set", "coupled.da1=1.0",
                "--set", "coupled.N=3"]) == 0
    header, rows = read_csv(tmp_path / "trace.csv")
    assert header == ["k", "a1_k", "indirect_spread_k", "leak_k"]
    assert rows.shape == (4, 4) and math.isnan(rows[0, 1])
    assert np.ptp(rows[:, 2]) < 1e-8


def test_sequence_record(tmp_path):
    assert run(["sequence", "--out", str(tmp_path), "--set", "sequence.N=3",
                "--set", "sequence.dT=3.14159", "--set", "sequence.mode=literal"]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["summary"]["mode"] == "literal"
    _, rows = read_csv(tmp_path / "record.csv")
    assert rows.shape == (4, 4)
    np.testing.assert_allclose(rows[:, 1], 3.14159 * np.arange(4))
