import hashlib
import json
import logging
import subprocess
import sys

import numpy as np
import pytest
from sklearn.datasets import load_svmlight_file

from schoenberg.cli import main
from schoenberg.config import RunConfig
from schoenberg.errors import ConfigError, InvalidDatasetError
from schoenberg.io import (ingest, read_particles, write_dataset, write_particles)
from schoenberg.measure import LabeledDataset, ParticleEnsemble, SupportInterval


def test_csv_round_trip(tmp_path):
    data = LabeledDataset([[0.5, -1.25], [3.0, 1e-7]], [1, -1])
    path = tmp_path / "d.csv"
    write_dataset(path, data)
    back = ingest(path)
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)


def test_libsvm_row_expands_to_dense(tmp_path):
    path = tmp_path / "d.svm"
    path.write_text("+1 1:0.5 3:2\n-1 2:1.5  # trailing comment\n\n")
    data = ingest(path, "libsvm")
    assert data.features.tolist() == [[0.5, 0.0, 2.0], [0.0, 1.5, 0.0]]
    assert data.labels.tolist() == [1.0, -1.0]


def test_zero_one_labels_remapped_with_warning(tmp_path, caplog):
    path = tmp_path / "d.csv"
    path.write_text("y,a\n0,1.0\n1,2.0\n")
    with caplog.at_level(logging.WARNING):
        data = ingest(path)
    assert data.labels.tolist() == [-1.0, 1.0]
    assert "remapped" in caplog.text


@pytest.mark.parametrize("body, fmt, line", [
    ("1,0.5\n-1,abc\n", "csv", 2),
    ("1,0.5,1\n-1,0.3\n", "csv", 2),
    ("1,0.5\n-1,nan\n", "csv", 2),
    ("+1 1:0.5\n-1 x:1\n+1 2:3\n", "libsvm", 2),
    ("+1 1:0.5\n-1 0:1\n", "libsvm", 2),
])
def test_malformed_rows_report_line(tmp_path, body, fmt, line):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(InvalidDatasetError, match=f":{line}:"):
        ingest(path, fmt)


def test_bad_labels_and_missing_files(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("2,0.5\n-1,1\n")
    with pytest.raises(InvalidDatasetError, match="label 2"):
        ingest(path)
    with pytest.raises(InvalidDatasetError):
        ingest(tmp_path / "missing.csv")
    with pytest.raises(InvalidDatasetError):
        ingest(path, "parquet")


def _checksum(x, y):
    return hashlib.sha256(np.round(x, 12).tobytes() + y.astype(float).tobytes()).hexdigest()


def test_thousand_rows_match_independent_parsers(tmp_path):
    rng = np.random.default_rng(0)
    x = np.round(rng.normal(size=(1000, 6)), 6)
    x[rng.random(x.shape) < 0.4] = 0.0
    y = np.where(rng.random(1000) < 0.5, -1, 1)
    csv_path, svm_path = tmp_path / "d.csv", tmp_path / "d.svm"
    with open(csv_path, "w") as fh:
        fh.write("label," + ",".join(f"f{j}" for j in range(6)) + "\n")
        for yi, row in zip(y, x):
            fh.write(f"{yi}," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(svm_path, "w") as fh:
        for yi, row in zip(y, x):
            pairs = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v)
            fh.write(f"{yi:+d} {pairs}\n")
    ref_csv = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    ours = ingest(csv_path)
    assert _checksum(ours.features, ours.labels) == _checksum(ref_csv[:, 1:], ref_csv[:, 0])
    xs, ys = load_svmlight_file(str(svm_path), n_features=6)
    ours = ingest(svm_path, "libsvm")
    assert _checksum(ours.features, ours.labels) == _checksum(xs.toarray(), ys)


def test_particle_file_round_trip(tmp_path):
    sup = SupportInterval(0.0, 2.0)
    e = ParticleEnsemble([0.1, 1.9, 1 / 3], sup)
    path = tmp_path / "p.csv"
    write_particles(path, e)
    assert np.array_equal(read_particles(path, sup).particles, e.particles)
    with pytest.raises(InvalidDatasetError):
        read_particles(path, SupportInterval(0.0, 1.0))


def test_config_defaults_and_overrides():
    cfg = RunConfig().override(["particles=20", "gamma=5", "horizons=1,2", "particle_scaling=false"])
    assert cfg["particles"] == 20 and cfg["gamma"] == 5.0
    assert cfg["horizons"] == [1.0, 2.0] and cfg["particle_scaling"] is False


@pytest.mark.parametrize("items", [["nope=1"], ["gamma=-1"], ["particles=1.5"], ["lambda=1"],
                                   ["horizons=3,1"], ["support_lower=2"], ["gamma"],
                                   ["data_format=xml"], ["bins=4"]])
def test_config_rejects_bad_settings(items):
    with pytest.raises(ConfigError):
        RunConfig().override(items)


def test_config_load_and_digest(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"particles": 12, "seed": 3}))
    a = RunConfig.load(path)
    assert a["particles"] == 12 and a.digest() == RunConfig({"particles": 12, "seed": 3}).digest()
    assert a.digest() != RunConfig({"particles": 13, "seed": 3}).digest()
    path.write_text(json.dumps({"particle": 12}))
    with pytest.raises(ConfigError):
        RunConfig.load(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(path)


SMALL = ["--set", "samples=30", "--set", "dim=3", "--set", "particles=8",
         "--set", "total_steps=50", "--set", "features=64", "--set", "epochs=2"]


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out), *SMALL])
    return code, out


def _hashes(out):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.iterdir()) if p.name != "summary.json"}


def test_train_kernel_writes_particles_and_summary(tmp_path):
    code, out = _run(tmp_path, "a", "train-kernel", "--seed", "4", "--set", "radius=100")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["seed"] == 4
    assert summary["config_hash"] == RunConfig(summary["config"]).digest()
    lines = (out / "particles.csv").read_text().splitlines()
    assert lines[0] == "index,value" and len(lines) == 9


@pytest.mark.parametrize("command", ["synth-data", "train-kernel", "features", "svm",
                                     "kmeans-label", "pde-simulate", "mmd-test", "lsh-build"])
def test_commands_reproducible(tmp_path, command):
    extra = ["--set", "radius=100", "--set", "horizons=0.1", "--set", "trials=5",
             "--set", "inverse_temperature=100"]
    c1, o1 = _run(tmp_path, "one", command, "--seed", "2", *extra)
    c2, o2 = _run(tmp_path, "two", command, "--seed", "2", *extra)
    assert c1 == c2 == 0
    assert _hashes(o1) == _hashes(o2) and _hashes(o1)
    s1 = json.loads((o1 / "summary.json").read_text())
    s2 = json.loads((o2 / "summary.json").read_text())
    assert s1["metrics"] == s2["metrics"] and s1["config_hash"] == s2["config_hash"]


def test_lsh_query_against_built_codes(tmp_path):
    code, built = _run(tmp_path, "b", "lsh-build", "--seed", "1")
    assert code == 0
    _, synth = _run(tmp_path, "s", "synth-data", "--seed", "9")
    args = ["lsh-query", "--seed", "1", "--set", f"codes_path={built / 'codes.bin'}",
            "--set", f"queries={synth / 'data.csv'}", "--set", "neighbors=5"]
    code, out = _run(tmp_path, "q", *args)
    assert code == 0 and (out / "summary.json").exists()
    code, _ = _run(tmp_path, "q2", *args[:-4], "--set", f"queries={synth / 'data.csv'}",
                   "--set", "codes_path=" + str(built / "codes.bin"), "--set", "alphabet=3")
    assert code == 2


def test_exit_codes(tmp_path, capsys):
    assert main(["features", "--out", str(tmp_path), "--set", "bogus=1"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["exit_code"] == 2
    assert main(["svm", "--out", str(tmp_path), "--set", f"data={tmp_path / 'none.csv'}"]) == 3
    assert main(["train-kernel", "--out", str(tmp_path), *SMALL, "--set", "radius=1e-9",
                 "--set", "total_steps=5"]) == 4
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["type"] == "InfeasibleRadiusError"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "schoenberg.cli", "synth-data", "--out",
                           str(tmp_path), "--set", "samples=10", "--set", "dim=2"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "summary.json").exists()
