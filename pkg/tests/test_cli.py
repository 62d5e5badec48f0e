from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from hdpa.cli import main


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# hdpa-csv v1"
    return list(csv.DictReader(lines[1:]))


@pytest.fixture(scope="module")
def spike_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "spike.csv"
    assert main(["simulate", "--emit-data", str(path), "--n", "1000", "--p", "200", "--spikes", "6", "--seed", "4"]) == 0
    return path


def test_estimate_end_to_end(spike_csv, tmp_path, capsys):
    code = main(["estimate", "-i", str(spike_csv), "--gamma-r", "0.5", "--out", str(tmp_path),
                 "--format", "json,csv,svg"])
    assert code == 0
    report = json.loads((tmp_path / "estimate_hdpa.json").read_text())
    assert report["d_hat"] == 1
    assert report["sigma2_source"] == "estimated"
    assert report["assumption_ok"] is True
    assert len(_rows(tmp_path / "estimate_hdpa.csv")) == report["K"]
    svg = (tmp_path / "estimate_hdpa.svg").read_text()
    assert 'width="800" height="600"' in svg and "<polyline" in svg and "<circle" in svg
    assert "d_hat=1" in capsys.readouterr().out


def test_estimate_pa_with_oracle(spike_csv, tmp_path):
    assert main(["estimate", "-i", str(spike_csv), "--method", "pa", "--r", "10", "--sigma2", "oracle:1",
                 "--K", "5", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "estimate_pa.json").read_text())
    assert report["sigma2_source"] == "oracle" and report["sigma2_used"] == 1.0
    assert len(report["diagnostics"]["phi"]) == 6


def test_estimate_is_idempotent(spike_csv, tmp_path):
    args = ["estimate", "-i", str(spike_csv), "--r", "100", "--out", str(tmp_path), "--format", "json,csv,svg"]
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert main(args) == 0
    assert first == {p.name: p.read_bytes() for p in tmp_path.iterdir()}


def test_empty_file_exits_2(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert main(["estimate", "-i", str(path), "--r", "3"]) == 2


def test_bad_entry_exits_2(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,abc\n")
    assert main(["estimate", "-i", str(path), "--r", "3"]) == 2


def test_K_larger_than_p_exits_3(spike_csv, capsys):
    assert main(["estimate", "-i", str(spike_csv), "--r", "3", "--K", "201"]) == 3
    assert "K exceeds p" in capsys.readouterr().err


def test_bad_flag_exits_2():
    assert main(["estimate", "--r", "3"]) == 2
    assert main(["estimate", "-i", "x.csv", "--r", "3", "--sigma2", "nope"]) == 2


def test_limits_overestimation_table(tmp_path):
    assert main(["limits", "--gamma-p", "0.25", "--gamma-r", "0.01", "--spikes", "2", "--out", str(tmp_path),
                 "--format", "csv,json,svg"]) == 0
    rows = _rows(tmp_path / "limits.csv")
    phi = [float(r["phi_limit"]) for r in rows]
    assert phi[1] > phi[2]
    assert json.loads((tmp_path / "limits.json").read_text())["h_jump_limit"] < 0


def test_limits_assumption_violation_exits_3(tmp_path):
    assert main(["limits", "--gamma-p", "1", "--gamma-r", "1", "--spikes", "1", "--out", str(tmp_path)]) == 3


def test_region_boundary_monotone(tmp_path):
    assert main(["region", "--gamma-p", "0.75", "--steps", "25", "--out", str(tmp_path), "--format", "csv,svg"]) == 0
    rows = _rows(tmp_path / "region.csv")
    vals = [float(r["gamma_r0"]) for r in rows if r["status"] == "boundary"]
    assert len(vals) > 10
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert rows[0]["status"] == "inconsistent_everywhere"
    assert (tmp_path / "region.svg").exists()


def test_region_gamma_p_sweep(tmp_path):
    assert main(["region", "--sweep", "gamma_p", "--lambda", "1", "--steps", "10", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "region.csv")
    assert "gamma_p" in rows[0] and len(rows) == 10


def test_curves_command(tmp_path):
    assert main(["curves", "--m", "5", "--out", str(tmp_path), "--threads", "1"]) == 0
    rows = _rows(tmp_path / "curves.csv")
    assert len(rows) == 4 * 7
    assert (tmp_path / "curves.svg").read_text().count("<polyline") == 4


def test_simulate_small_cell(tmp_path):
    args = ["simulate", "--cell", "n=120,gp=0.25,gr=1", "--m", "3", "--spikes", "6,4", "--threads", "1",
            "--out", str(tmp_path)]
    assert main(args) == 0
    rows = _rows(tmp_path / "simulation.csv")
    assert len(rows) == 2 * 2 * 2
    first = (tmp_path / "simulation.csv").read_bytes(), (tmp_path / "simulation.json").read_bytes()
    assert main(args) == 0
    assert first == ((tmp_path / "simulation.csv").read_bytes(), (tmp_path / "simulation.json").read_bytes())


def test_config_file_precedence(tmp_path, spike_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# defaults\ninput = {spike_csv}\nr = 50\nmethod = pa\nK = 4\nformat = json\n")
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "estimate", "--K", "3", "--out", str(out)]) == 0
    report = json.loads((out / "estimate_pa.json").read_text())
    assert report["K"] == 3 and report["r"] == 50


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hdpa", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "hdpa" in proc.stdout


@pytest.mark.slow
def test_simulate_scaled_cell(tmp_path):
    assert main(["simulate", "--cell", "n=1000,gp=0.5,gr=5", "--m", "100", "--method", "hdpa",
                 "--model", "gaussian", "--sigma2", "oracle", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "simulation.csv")
    assert float(row["proportion_wrong"]) <= 0.05
