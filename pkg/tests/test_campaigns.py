import math

import numpy as np
import pytest

from spindipole import campaigns
from spindipole.campaigns import (
    CAMPAIGNS,
    DEPHASING_TARGET,
    DEPHASING_TIMES,
    calibrated_instrument,
    campaign,
    coherence_factor,
    expected_visibility,
    instrument_at_distance,
    oracle_consistency,
    preset_document,
    tuned_gradient_rms,
)
from spindipole.config import config_from_dict
from spindipole.engine import MeasurementRecord, simulate_cell
from spindipole.instrument import detection_contrast
from spindipole.sequence import build_standard_sequence


def test_presets_are_valid_configs():
    for name in CAMPAIGNS:
        cfg = config_from_dict(preset_document(name))
        assert cfg.run.seed is not None
    with pytest.raises(ValueError):
        preset_document("fig9")


def test_tuned_noise_gives_target_raw_coherence_time():
    cfg = config_from_dict(preset_document("fig2c"))
    ctx = cfg.context()
    t1, t2 = DEPHASING_TIMES
    amp = lambda T: detection_contrast(ctx.instrument, T) * coherence_factor(ctx, T, cfg.sequence.f0)
    tau = (t2 - t1) / math.log(amp(t1) / amp(t2))
    assert tau == pytest.approx(DEPHASING_TARGET, rel=1e-9)
    assert ctx.noise.grad_rms == pytest.approx(tuned_gradient_rms(calibrated_instrument()))


def test_visibility_model_matches_engine_oracle():
    cfg = config_from_dict(preset_document("fig3b"))
    ctx = cfg.context()
    seq = build_standard_sequence(15.0, 2.0, math.pi / 2)
    _, oracle = simulate_cell(seq, ctx, 2000, seed=5)
    par = oracle[0] + oracle[1] - oracle[2]
    assert par == pytest.approx(expected_visibility(ctx, 15.0, 2.0), rel=0.02)
    # the dephasing-free model overshoots by more than the Markov error
    assert expected_visibility(ctx, 15.0, 2.0, dephasing=False) > par * 1.05


def _sqrt_line(cls):
    rows = [ln.split(",") for ln in campaigns.FIG2B_TABLE.read_text().splitlines()
            if ln and not ln.startswith("#") and not ln.startswith("x")]
    pts = np.array([(float(x), math.sqrt(float(f))) for x, c, f in rows if c == cls])
    slope, icpt = np.polyfit(pts[:, 0], pts[:, 1], 1)
    return lambda d: icpt + slope * d


def test_instrument_at_distance_matches_table():
    base = calibrated_instrument()
    up, down = _sqrt_line("UU"), _sqrt_line("DD")
    for d in (2.4e-6, 3.0e-6):
        m = instrument_at_distance(base, d)
        assert m.D_up(15.0) == pytest.approx(up(d), abs=1e-9)
        assert m.D_down(15.0) == pytest.approx(down(d), abs=1e-9)
        assert m.up.slope == base.up.slope
    assert up(2.4e-6) == pytest.approx(math.sqrt(0.925), abs=1e-5)


def test_oracle_consistency_statistic():
    oracle = np.array([0.2, 0.3, 0.5])
    good = MeasurementRecord(200, 300, 500, 0.0, 2.4e-6, 0.0, oracle=oracle)
    assert oracle_consistency([good])["z"] == 0.0
    bad = MeasurementRecord(300, 300, 400, 0.0, 2.4e-6, 0.0, oracle=oracle)
    assert oracle_consistency([bad])["z"] > 3
    impossible = MeasurementRecord(1, 0, 0, 0.0, 2.4e-6, 0.0, oracle=np.array([0.0, 0.5, 0.5]))
    assert math.isinf(oracle_consistency([impossible])["z"])


def test_quick_fig3a_report():
    r = campaign("fig3a", shots=40)
    assert not r.partial
    assert r.provenance["config_hash"] and r.provenance["seed"] == 20160523
    assert r.tables["fringe"].columns[-4:] == ["phi_parity", "parity", "sigma", "N"]
    assert sum(rec.N for rec in r.records) == 40 * 13
    assert {c.name for c in r.checks} >= {"oracle_z"}


def test_overrides_reach_the_run():
    r = campaign("fig3a", overrides=["sequence.phi_parity=[-1.0, 0.0, 1.0]"], shots=10, seed=3)
    assert r.config["sequence"]["phi_parity"] == [-1.0, 0.0, 1.0]
    assert r.provenance["seed"] == 3


def test_failure_leaves_partial_report(monkeypatch):
    def broken(report, cfg, threads):
        report.results["stage"] = "started"
        raise RuntimeError("boom")

    monkeypatch.setitem(campaigns.RUNNERS, "fig3a", broken)
    r = campaign("fig3a", shots=5)
    assert r.partial and "boom" in r.error
    assert r.results["stage"] == "started"
    assert not r.passed
