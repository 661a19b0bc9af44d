import json
import math
import subprocess
import sys

import pytest

from spindipole import campaigns
from spindipole.campaigns import FIG2A_TABLE
from spindipole.cli import main
from spindipole.report import CampaignReport, Table, dumps_csv, dumps_json, emit_outputs, fmt_float, read_table

CONFIG = """\
geometry: {d: 2.4e-6}
field: {grad: 3e-7}
noise: {collective_rms: 1e-7, grad_rms: 1e-6}
instrument:
  prep_fidelity: 0.99
  up: {intercept: 0.96, slope: -0.0035}
  down: {intercept: 0.95, slope: -0.0035}
sequence:
  T: 4
  f0: 2
  phi_parity: [-1.5707963267948966, -0.7853981633974483, 0.0, 0.7853981633974483, 1.5707963267948966]
run: {shots: 60, seed: 11}
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "exp.yaml"
    p.write_text(CONFIG)
    return p


# --- serialization ---------------------------------------------------------------

def test_float_format():
    assert fmt_float(1 / 3) == "0.333333333333"
    assert fmt_float(math.nan) == "nan" and fmt_float(-math.inf) == "-inf"
    assert json.loads(dumps_json({"b": 1 / 3, "a": [math.inf]})) == {"a": ["inf"], "b": 0.333333333333}
    assert dumps_json({"b": 1, "a": 2}).index('"a"') < dumps_json({"b": 1, "a": 2}).index('"b"')


def test_table_io(tmp_path):
    t = Table(["x", "name", "flag"])
    t.add(0.1, "UU", True)
    with pytest.raises(ValueError):
        t.add(1.0)
    assert dumps_csv(t) == "x,name,flag\n0.1,UU,true\n"
    r = CampaignReport("demo", {}, {"config_hash": "abc"}, tables={"t": t})
    paths = emit_outputs(r, tmp_path / "o", "both")
    assert [p.name for p in paths] == ["demo.json", "demo_t.csv"]
    back = read_table(tmp_path / "o" / "demo_t.csv")
    assert back.columns == ["x", "name", "flag"] and back.rows == [[0.1, "UU", "true"]]
    with pytest.raises(ValueError):
        emit_outputs(r, tmp_path, "xml")


def test_report_schema():
    r = CampaignReport("demo", {"k": 1}, {"config_hash": "abc", "seed": 1, "version": "0"})
    r.check("a", 0.5, 0.0, 1.0)
    r.check("b", math.nan, 0.0, 1.0)
    d = r.to_dict()
    assert set(d) == {"campaign", "status", "error", "provenance", "config", "results", "checks"}
    assert [c["passed"] for c in d["checks"]] == [True, False]
    assert not r.passed


# --- CLI -------------------------------------------------------------------------

def test_simulate_is_byte_deterministic(config_file, tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["simulate", str(config_file), "--out-dir", str(out), "--threads", str(1 + 2 * k)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"simulate.json", "simulate_fringe.csv", "simulate_records.csv", "simulate_shots.csv"}
    rep = json.loads(outs[0]["simulate.json"])
    assert rep["provenance"]["seed"] == 11 and len(rep["provenance"]["config_hash"]) == 16
    assert outs[0]["simulate_fringe.csv"].splitlines()[0] == b"phi_parity,parity,sigma,N"


def test_seed_changes_output(config_file, tmp_path):
    main(["simulate", str(config_file), "--out-dir", str(tmp_path / "a")])
    main(["simulate", str(config_file), "--out-dir", str(tmp_path / "b"), "--seed", "12"])
    a = (tmp_path / "a" / "simulate_shots.csv").read_bytes()
    b = (tmp_path / "b" / "simulate_shots.csv").read_bytes()
    assert a != b


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("geometry: {d: 2.4e-6, xi_override: 1}\nsequence: {T: 1}\nrun: {shots: 1}\n")
    assert main(["simulate", str(bad), "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "xi_override" in err and "seed" in err
    assert main(["simulate", str(tmp_path / "missing.yaml")]) == 2
    assert main(["campaign", "fig3a", "--override", "sequence.T=-1", "--out-dir", str(tmp_path)]) == 2


def test_runtime_errors_exit_3(tmp_path, monkeypatch, capsys):
    assert main(["fit", str(tmp_path / "nothing.csv")]) == 3

    def broken(report, cfg, threads):
        raise RuntimeError("boom")

    monkeypatch.setitem(campaigns.RUNNERS, "fig3a", broken)
    assert main(["campaign", "fig3a", "--out-dir", str(tmp_path)]) == 3
    rep = json.loads((tmp_path / "fig3a.json").read_text())
    assert rep["status"] == "partial" and "boom" in rep["error"]


def test_band_miss_exits_4_only_with_check(tmp_path, monkeypatch):
    def missing(report, cfg, threads):
        report.check("amplitude", 0.5, 0.18, 0.30)

    monkeypatch.setitem(campaigns.RUNNERS, "fig3a", missing)
    assert main(["campaign", "fig3a", "--out-dir", str(tmp_path), "--check"]) == 4
    assert main(["campaign", "fig3a", "--out-dir", str(tmp_path)]) == 0


def test_fit_and_adev_commands(config_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", str(config_file), "--out-dir", str(out), "--format", "csv"]) == 0
    capsys.readouterr()
    assert main(["fit", str(out / "simulate_records.csv"), "--alpha", "0.8", "--T", "4"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert {"amplitude", "amplitude_sigma", "xi_hz", "points"} <= set(res)
    assert len(res["points"]) == 5
    assert main(["adev", str(out / "simulate_shots.csv"), "--out-dir", str(tmp_path / "adev")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["shots"] == 300 and res["slope"] < 0
    assert (tmp_path / "adev" / "adev.json").exists()


def test_calibrate_command(capsys):
    assert main(["calibrate", str(FIG2A_TABLE), "--at", "15"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["readout"] == "pair"
    assert res["D_up"] == pytest.approx(math.sqrt(0.925), abs=2e-3)
    D = 0.5 * (res["D_up"] + res["D_down"])
    assert res["alpha"] == pytest.approx((2 * D - 1) ** 2, abs=1e-9)
    assert main(["calibrate", str(FIG2A_TABLE), "--readout", "spin"]) == 0


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "spindipole.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
    r = subprocess.run([sys.executable, "-m", "spindipole.cli", "campaign", "fig7"], capture_output=True, text=True)
    assert r.returncode == 2
