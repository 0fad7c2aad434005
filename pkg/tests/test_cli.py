import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from homquant import scenarios as examples
from homquant.cli import DEFAULT_CONFIG, config_hash, main


@pytest.fixture(scope="module")
def cert_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("cert")
    assert main(["synthesize", "--out", str(out)]) == 0
    return out / "certificate.json"


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_synthesize_writes_certified_document(cert_file):
    doc = json.loads(cert_file.read_text())
    assert doc["margins"]["W"] < 0 and doc["rho"] > 0
    assert len(doc["config_hash"]) == 16
    assert doc["objective"] == "robust"


def test_synthesize_margin_objective(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"synthesis": {"objective": "margin"}})
    assert main(["synthesize", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "certificate.json").read_text())
    assert np.trace(np.array(doc["X"])) == pytest.approx(3.0)
    assert "certified" in capsys.readouterr().out


def test_uncontrollable_plant_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"plant": {"A": [[0.0]], "B": [[0.0]]}, "simulation": {"x0": [1.0]}})
    assert main(["synthesize", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "controllable" in capsys.readouterr().err


def test_large_delta_exit_2(tmp_path, capsys):
    assert main(["synthesize", "--delta", "0.9", "--out", str(tmp_path)]) == 2
    assert "infeasible" in capsys.readouterr().err


@pytest.mark.parametrize("doc", [{"delta": 1.5}, {"plant": {"A": [[0, 1], [0, 0]], "B": [[1]]}}, {"simulation": {"x0": [1]}}])
def test_bad_configs_exit_1(tmp_path, doc):
    cfg = write_config(tmp_path / "c.json", doc)
    assert main(["synthesize", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_verify_self_synthesized(cert_file, capsys):
    assert main(["verify", str(cert_file)]) == 0
    out = capsys.readouterr().out
    for key in ("margin_mono", "margin_posdef", "margin_W", "rho"):
        assert key in out


def test_verify_published_matrices(tmp_path, capsys):
    doc = {
        "A": examples.CHAIN_A.tolist(),
        "B": examples.CHAIN_B.tolist(),
        "P": examples.PUBLISHED_P.tolist(),
        "K": examples.PUBLISHED_K.tolist(),
        "delta": 0.4,
        "tau": 2.5,
    }
    path = write_config(tmp_path / "pub.json", doc)
    assert main(["verify", path]) == 0
    assert "slack" in capsys.readouterr().out


def test_verify_corrupted_file_exit_1(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{oops")
    assert main(["verify", str(path)]) == 1
    assert main(["verify", str(tmp_path / "missing.json")]) == 1


def test_verify_uncertified_exit_2(tmp_path, cert_file):
    doc = json.loads(cert_file.read_text())
    doc["Y"] = (np.zeros_like(np.array(doc["Y"]))).tolist()
    path = write_config(tmp_path / "zero.json", doc)
    assert main(["verify", path]) == 2


def test_quantize_demo_prints_codes(cert_file, capsys):
    assert main(["quantize-demo", "--certificate", str(cert_file), "--seed", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# config_hash=")
    assert "bits=10" in lines[0]
    assert len(lines) == 6
    assert all("code=" in ln for ln in lines[1:])


def test_simulate_outputs(tmp_path, cert_file):
    rc = main(["simulate", "--certificate", str(cert_file), "--out", str(tmp_path), "--t-end", "3"])
    assert rc == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == f"# config_hash={summary['config_hash']}"
    assert lines[1] == "t,x1,x2,x3,u1,seed_index,hom_norm,lyap_rate"
    assert summary["settling_time"] is not None and summary["settling_time"] < 3


def test_simulate_is_deterministic(tmp_path, cert_file):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--certificate", str(cert_file), "--out", str(out), "--t-end", "0.5"]) == 0
        outs.append(((out / "trajectory.csv").read_bytes(), (out / "summary.json").read_bytes()))
    assert outs[0] == outs[1]


def test_simulate_origin_unperturbed(tmp_path, cert_file):
    cfg = write_config(tmp_path / "c.json", {"simulation": {"x0": [0, 0, 0], "perturbation": {"kind": "none"}}})
    assert main(["simulate", "--config", cfg, "--certificate", str(cert_file), "--out", str(tmp_path), "--t-end", "0.2"]) == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    assert all(float(v) == 0.0 for r in rows[1:] for v in r[1:5])


def test_simulate_scalar(tmp_path):
    cert = write_config(tmp_path / "k.json", {
        "A": [[0.0]], "B": [[1.0]], "X": [[1.0]], "Y": [[-1.0]], "delta": 0.4, "tau": 2.5,
    })
    cfg = write_config(tmp_path / "c.json", {
        "plant": {"A": [[0.0]], "B": [[1.0]]},
        "quantizer": {"N": 2},
        "simulation": {"x0": [1.0], "perturbation": {"kind": "none"}},
    })
    assert main(["simulate", "--config", cfg, "--certificate", cert, "--out", str(tmp_path), "--t-end", "3"]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    # dx/dt = -sign(x) from x0 = 1 enters the 2% band at t = 0.98
    assert summary["settling_time"] == pytest.approx(0.98, abs=1e-3)


def test_flags_change_config_hash():
    assert config_hash(DEFAULT_CONFIG) == config_hash(json.loads(json.dumps(DEFAULT_CONFIG)))
    changed = json.loads(json.dumps(DEFAULT_CONFIG))
    changed["simulation"]["h"] = 2e-4
    assert config_hash(changed) != config_hash(DEFAULT_CONFIG)


def test_sweep_table(tmp_path, cert_file):
    rc = main(["sweep", "--certificate", str(cert_file), "--out", str(tmp_path), "--budgets", "8,64,128,256,512,1024",
               "--t-end", "3"])
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    rows = list(csv.DictReader(lines[1:]))
    assert list(rows[0]) == ["N", "m", "delta_N", "feasible", "rho", "settling_time"]
    assert rows[0]["feasible"] == "budget-too-small"
    deltas = [float(r["delta_N"]) for r in rows[1:]]
    assert all(a >= b for a, b in zip(deltas, deltas[1:]))
    by_n = {int(r["N"]): r for r in rows}
    assert by_n[256]["feasible"] == "no" and by_n[256]["settling_time"] == ""
    assert by_n[512]["feasible"] == "yes" and float(by_n[512]["settling_time"]) < 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "homquant", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("synthesize", "verify", "quantize-demo", "simulate", "sweep"):
        assert cmd in res.stdout
