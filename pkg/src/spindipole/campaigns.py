"""
Preset campaigns, one per measured panel.

Every preset starts from :func:`base_document`, a full configuration at
the main operating point, and sweeps one parameter:

    fig2a  detection fidelity of uu / dd vs experiment time
    fig2b  detection fidelity of uu / dd vs ion distance at T = 15 s
    fig2c  psi+ parity fringes at T = 1 s and 15 s (dephasing time)
    fig3a  parity fringe at T = 0.1 s, both initial states
    fig3b  parity fringe at T = 15 s, swap witness, Allan deviation
    fig3c  visibility at phi = pi/2 vs T
    fig4   visibility vs ion distance, power-law exponent

``run.shots`` is the shot count per grid point (split over the two
initial states when interleaving).
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .config import apply_overrides, config_from_dict
from .engine import SimContext, record_from_outcomes, simulate_cell
from .inference import (
    ParityEstimate,
    adev_slope,
    allan_deviation,
    estimate_parity,
    fit_coherence_time,
    fit_coupling_from_fringe,
    fit_fringe,
    fit_power_law,
    fit_visibility_vs_time,
    mle_witness,
    parity_series,
    swap_witness,
    visibility_model,
)
from .instrument import (
    FidelityLine,
    InstrumentModel,
    confusion_matrix,
    detection_contrast,
    fidelity_from_calibration,
    read_calibration_table,
)
from .noise import echo_phase_variance
from .physics import CODATA, coupling_strength, ideal_parity
from .report import CampaignReport, Table
from .sequence import build_standard_sequence

DATA = Path(__file__).parent / "data"
FIG2A_TABLE = DATA / "fig2a_calibration.csv"
FIG2B_TABLE = DATA / "fig2b_calibration.csv"

PHI_GRID = [float(x) for x in np.linspace(-np.pi, np.pi, 13)]
TWO_PI_MHZ = 2 * np.pi * 1e-3

# fig2c wait times and the raw dephasing time the gradient noise is tuned to
DEPHASING_TIMES = (1.0, 15.0)
DEPHASING_TARGET = 44.0  # s
WITNESS_SHOTS = 2388
FIG4_SHOTS = 10000
DISTANCES = (2.2e-6, 2.4e-6, 2.6e-6, 2.8e-6, 3.0e-6)
CAMPAIGNS = ("fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c", "fig4")


# --- model helpers -------------------------------------------------------------

def phase_variance(T: float, f0, d: float, grad_rms: float, corr_time: float) -> float:
    """Variance of the ud/du relative phase from gradient noise, rad^2."""
    if grad_rms == 0 or T == 0:
        return 0.0
    k = CODATA.gyromagnetic * d
    return k * k * echo_phase_variance(T, f0, grad_rms, corr_time)


def coherence_factor(ctx: SimContext, T: float, f0) -> float:
    """Coherence left in a fixed DFS superposition after ``T``."""
    nz = ctx.noise
    return math.exp(-0.5 * phase_variance(T, f0, ctx.d, nz.grad_rms, nz.grad_corr_time))


def dephasing_rate(ctx: SimContext, T: float, f0) -> float:
    """Equivalent Markovian decay rate of the DFS coherence over ``T`` (1/s)."""
    nz = ctx.noise
    return 0.5 * phase_variance(T, f0, ctx.d, nz.grad_rms, nz.grad_corr_time) / T if T > 0 else 0.0


def readout_contrast(ctx: SimContext, T: float) -> float:
    """Parity contrast left by preparation and detection errors."""
    return detection_contrast(ctx.instrument, T) * ctx.instrument.prep_contrast


def expected_visibility(ctx: SimContext, T: float, f0, dephasing: bool = True) -> float:
    gamma = dephasing_rate(ctx, T, f0) if dephasing else 0.0
    return readout_contrast(ctx, T) * visibility_model(T, ctx.xi, gamma)


def tuned_gradient_rms(model: InstrumentModel, d: float = 2.4e-6, f0: float = 2.0,
                       corr_time: float = 20e-3, times=DEPHASING_TIMES,
                       target: float = DEPHASING_TARGET) -> float:
    """Gradient-noise RMS (T/m) making the raw two-point dephasing time equal ``target``.

    The raw estimate ignores detection degradation, so the noise only has
    to supply the part of the amplitude drop that detection does not.
    """
    t1, t2 = times
    drop = (t2 - t1) / target - math.log(detection_contrast(model, t1) / detection_contrast(model, t2))
    if drop <= 0:
        return 0.0
    v1 = phase_variance(t1, f0, d, 1.0, corr_time)
    v2 = phase_variance(t2, f0, d, 1.0, corr_time)
    return math.sqrt(2.0 * drop / (v2 - v1))


def calibrated_instrument(prep_fidelity: float = 0.99, entangled_fidelity: float = 0.95) -> InstrumentModel:
    up, down = fidelity_from_calibration(read_calibration_table(FIG2A_TABLE), "pair")
    return InstrumentModel(prep_fidelity, up, down, entangled_fidelity)


def instrument_at_distance(model: InstrumentModel, d: float, T: float = 15.0) -> InstrumentModel:
    """Shift the time-dependent lines so that at ``T`` they match the distance calibration."""
    up_d, down_d = fidelity_from_calibration(read_calibration_table(FIG2B_TABLE), "pair")
    return replace(model,
                   up=model.up.shifted(float(up_d(d)) - model.D_up(T)),
                   down=model.down.shifted(float(down_d(d)) - model.D_down(T)))


def base_document() -> dict:
    """Configuration of the main operating point with all defaults spelled out."""
    model = calibrated_instrument()
    return {
        # ion spacing at the main operating point
        "geometry": {"d": 2.4e-6},
        # quantization field; residual static gradient after compensation
        "field": {"B0": 0.44e-3, "grad": 3e-7},
        "noise": {
            "collective_rms": 0.1e-6,  # typical laboratory field noise
            "collective_corr_time": 10e-3,  # declared, not measured
            "grad_static": 0.0,
            # tuned so the raw fig2c dephasing time is 44 s
            "grad_rms": tuned_gradient_rms(model),
            "grad_corr_time": 20e-3,  # declared, not measured
        },
        "instrument": {
            "prep_fidelity": 0.99,  # per spin, i.e. >98% for the pair
            "entangled_fidelity": 0.95,  # typical entangling-gate fidelity
            "pulse_error": 0.0,
            "calibration": str(FIG2A_TABLE),  # detection fidelity vs time
            "readout": "pair",
        },
        "sequence": {
            "T": 15.0,  # longest experiment time
            "f0": 2.0,  # echo flip rate
            "phi_parity": PHI_GRID,
            "interleave": True,  # phi_init alternates between 0 and pi
            "init": "ud",
            "analysis": True,
            "prep": "product",
            "dt": 1e-3,
        },
        "run": {"shots": 500, "seed": 20160523, "batch_size": 1000, "out_dir": "out"},
    }


def preset_document(name: str) -> dict:
    if name not in CAMPAIGNS:
        raise ValueError(f"unknown campaign {name!r}; choose from {', '.join(CAMPAIGNS)}")
    doc = base_document()
    seq = doc["sequence"]
    if name in ("fig2a", "fig2b"):
        seq.update(phi_parity=[0.0], interleave=False, analysis=False)
    elif name == "fig2c":
        seq.update(prep="psi+", interleave=False)
    elif name == "fig3a":
        # 0.1 s holds no whole echo pair, so this point runs without echoes
        seq.update(T=0.1, f0=None)
    elif name == "fig3c":
        seq.update(phi_parity=[math.pi / 2])
    elif name == "fig4":
        seq.update(phi_parity=[math.pi / 2])
        doc["run"]["shots"] = FIG4_SHOTS
    return doc


# --- cell execution ---------------------------------------------------------------

@dataclass
class Cell:
    labels: dict
    seq: object
    ctx: SimContext
    shots: int
    phi: float = 0.0
    sign: int = 1


def _split(shots: int, interleave: bool):
    if interleave:
        return [(1, shots - shots // 2), (-1, shots // 2)]
    return [(1, shots)]


def fringe_cells(ctx, T, f0, phis, shots, interleave, init="ud", **labels) -> list[Cell]:
    cells = []
    for phi in phis:
        for s, n in _split(shots, interleave):
            if n == 0:
                continue
            seq = build_standard_sequence(T, f0, phi, s, init)
            cells.append(Cell({**labels, "T": T, "phi_parity": phi, "init_sign": s}, seq, ctx, n, phi, s))
    return cells


def run_cells(cells: list[Cell], seed: int, batch_size: int, threads: int = 1, offset: int = 0):
    def work(i):
        c = cells[i]
        outs, oracle = simulate_cell(c.seq, c.ctx, c.shots, seed, offset + i, batch_size)
        return record_from_outcomes(outs, oracle, c.seq, c.ctx, c.phi, c.sign)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(work, range(len(cells))))
    return [work(i) for i in range(len(cells))]


def oracle_consistency(records) -> dict:
    """Pooled chi-square of observed counts against the oracle outcome probabilities."""
    chi2, dof, zmax = 0.0, 0, 0.0
    for r in records:
        n = r.counts.astype(float)
        e = r.N * r.oracle
        live = e > 1e-12
        if np.any(n[~live] > 0):
            return {"chi2": math.inf, "dof": dof, "p_value": 0.0, "z": math.inf, "max_cell_z": math.inf}
        chi2 += float(np.sum((n[live] - e[live]) ** 2 / e[live]))
        dof += int(live.sum()) - 1
        # parity-like marginal of this cell
        p = r.oracle[0] + r.oracle[1]
        if 0 < p < 1:
            zmax = max(zmax, abs((n[0] + n[1] - r.N * p) / math.sqrt(r.N * p * (1 - p))))
    if dof == 0:
        return {"chi2": 0.0, "dof": 0, "p_value": 1.0, "z": 0.0, "max_cell_z": zmax}
    pval = float(stats.chi2.sf(chi2, dof))
    z = float(stats.norm.isf(pval / 2)) if pval < 1 else 0.0
    return {"chi2": chi2, "dof": dof, "p_value": pval, "z": max(z, 0.0), "max_cell_z": zmax}


def _records_table(cells, records) -> Table:
    keys: list[str] = []
    for c in cells:
        keys += [k for k in c.labels if k not in keys]
    t = Table(["cell"] + keys + ["n_UU", "n_DD", "n_ONE", "N", "oracle_UU", "oracle_DD", "oracle_ONE"])
    for i, (c, r) in enumerate(zip(cells, records)):
        t.add(i, *[c.labels.get(k, "") for k in keys], r.n_UU, r.n_DD, r.n_ONE, r.N, *map(float, r.oracle))
    return t


def _group(cells, records, key):
    out: dict = {}
    for c, r in zip(cells, records):
        out.setdefault(c.labels[key], []).append((c, r))
    return out


def _fringe(cells, records, table: Table, quadrature="sin", offset=False, **extra):
    """Pool interleaved cells per phase, add fringe rows, fit the amplitude."""
    by_phi = _group(cells, records, "phi_parity")
    phis, ests = [], []
    for phi, items in by_phi.items():
        est = estimate_parity([r for _, r in items])
        phis.append(phi)
        ests.append(est)
        table.add(*extra.values(), phi, est.value, est.sigma, est.N)
    sig = np.array([e.sigma for e in ests])
    fit = fit_fringe(phis, [e.value for e in ests], sig if np.all(sig > 0) else None, quadrature, offset)
    return fit, ests


# --- presets ---------------------------------------------------------------------

def _fidelity_sweep(report, cfg, threads, xs, key, ctx_for):
    cells = []
    for x in xs:
        ctx = ctx_for(x)
        for cls in ("uu", "dd"):
            T = x if key == "T" else cfg.sequence.T
            seq = build_standard_sequence(T, cfg.sequence.f0, 0.0, 1, cls, analysis=False)
            cells.append(Cell({key: x, "class": cls.upper()}, seq, ctx, cfg.run.shots))
    records = run_cells(cells, cfg.run.seed, cfg.run.batch_size, threads)
    report.records = records
    report.tables["records"] = _records_table(cells, records)
    t = Table([key, "class", "fidelity", "sigma", "N", "model"])
    points = []
    for c, r in zip(cells, records):
        cls = c.labels["class"]
        k = 0 if cls == "UU" else 1
        f = r.counts[k] / r.N
        T = c.seq.duration
        D = c.ctx.instrument.D_up(T) if cls == "UU" else c.ctx.instrument.D_down(T)
        t.add(c.labels[key], cls, f, math.sqrt(f * (1 - f) / r.N), r.N, D * D)
        points.append((c.labels[key], cls, f))
    report.tables["fidelity"] = t
    up, down = fidelity_from_calibration(points, "pair")
    report.results["fitted_lines"] = {
        "up": {"intercept": up.intercept, "slope": up.slope},
        "down": {"intercept": down.intercept, "slope": down.slope},
    }
    return records


def campaign_fig2a(report, cfg, threads):
    base = cfg.context()
    ctx = replace(base, instrument=replace(base.instrument, prep_fidelity=1.0))
    xs = (5.0, 10.0, 15.0, 20.0, 25.0)
    _fidelity_sweep(report, cfg, threads, xs, "T", lambda x: ctx)
    ins = base.instrument
    report.results["input_lines"] = {
        "up": {"intercept": ins.up.intercept, "slope": ins.up.slope},
        "down": {"intercept": ins.down.intercept, "slope": ins.down.slope},
    }
    report.results["alpha_15s"] = detection_contrast(ins, 15.0)


def campaign_fig2b(report, cfg, threads):
    base = cfg.context()
    ins = replace(base.instrument, prep_fidelity=1.0)
    _fidelity_sweep(report, cfg, threads, DISTANCES, "d",
                    lambda d: replace(base, d=d, xi=None, instrument=instrument_at_distance(ins, d)))


def campaign_fig2c(report, cfg, threads):
    ctx = replace(cfg.context(), prep="psi+")
    sq = cfg.sequence
    cells = []
    for T in DEPHASING_TIMES:
        cells += fringe_cells(ctx, T, sq.f0, sq.phi_parity, cfg.run.shots, False)
    records = run_cells(cells, cfg.run.seed, cfg.run.batch_size, threads)
    report.records = records
    report.tables["records"] = _records_table(cells, records)
    fr = Table(["T", "phi_parity", "parity", "sigma", "N"])
    amp = Table(["T", "amplitude", "sigma", "model"])
    As, sA = [], []
    for T, items in _group(cells, records, "T").items():
        fit, _ = _fringe([c for c, _ in items], [r for _, r in items], fr, "cos", True, T=T)
        model = detection_contrast(ctx.instrument, T) * ctx.instrument.entangled_fidelity * \
            coherence_factor(ctx, T, sq.f0)
        amp.add(T, fit["A"], fit.error("A"), model)
        As.append(fit["A"])
        sA.append(fit.error("A"))
    report.tables["fringe"] = fr
    report.tables["amplitudes"] = amp
    tau = fit_coherence_time(DEPHASING_TIMES, As, sA)
    report.results.update(amplitude_short=As[0], amplitude_short_sigma=sA[0],
                          amplitude_long=As[1], amplitude_long_sigma=sA[1],
                          tau=tau["tau"], tau_sigma=tau.error("tau"),
                          grad_rms=ctx.noise.grad_rms)
    report.check("amplitude_T1", As[0], 0.71, 0.91)
    report.check("amplitude_T15", As[1], 0.51, 0.67)
    report.check("tau", tau["tau"], 32.0, 56.0)


def _fringe_campaign(report, cfg, threads, T, f0):
    ctx = cfg.context()
    sq = cfg.sequence
    cells = fringe_cells(ctx, T, f0, sq.phi_parity, cfg.run.shots, sq.interleave, sq.init)
    records = run_cells(cells, cfg.run.seed, cfg.run.batch_size, threads)
    fr = Table(["phi_parity", "parity", "sigma", "N"])
    fit, _ = _fringe(cells, records, fr)
    alpha = readout_contrast(ctx, T)
    report.tables["fringe"] = fr
    report.results.update(amplitude=fit["A"], amplitude_sigma=fit.error("A"),
                          amplitude_model=expected_visibility(ctx, T, f0),
                          alpha=alpha, alpha_detection=detection_contrast(ctx.instrument, T),
                          dephasing_rate=dephasing_rate(ctx, T, f0))
    return ctx, cells, records, fit, alpha


def campaign_fig3a(report, cfg, threads):
    sq = cfg.sequence
    ctx, cells, records, fit, alpha = _fringe_campaign(report, cfg, threads, sq.T, sq.f0)
    report.records = records
    report.tables["records"] = _records_table(cells, records)
    z = (fit["A"] - report.results["amplitude_model"]) / fit.error("A")
    report.results["amplitude_z"] = z
    report.check("amplitude_vs_model_z", abs(z), 0.0, 3.0)


def campaign_fig3b(report, cfg, threads):
    sq = cfg.sequence
    ctx, cells, records, fit, alpha = _fringe_campaign(report, cfg, threads, sq.T, sq.f0)
    xi = fit_coupling_from_fringe(fit, alpha, sq.T, gamma=dephasing_rate(ctx, sq.T, sq.f0))
    xi_raw = fit_coupling_from_fringe(fit, alpha, sq.T)
    report.results.update(xi_hz=xi["xi"] / (2 * np.pi), xi_hz_sigma=xi.error("xi") / (2 * np.pi),
                          xi_hz_no_dephasing=xi_raw["xi"] / (2 * np.pi))

    # witness: a population record and an interleaved parity record at pi/2
    pop = []
    for s, n in _split(WITNESS_SHOTS, True):
        seq = build_standard_sequence(sq.T, sq.f0, 0.0, s, sq.init, analysis=False)
        pop.append(Cell({"T": sq.T, "phi_parity": "none", "init_sign": s, "role": "populations"},
                        seq, ctx, n, 0.0, s))
    par = fringe_cells(ctx, sq.T, sq.f0, [math.pi / 2], WITNESS_SHOTS, True, sq.init, role="parity")
    wcells = pop + par
    wrec = run_cells(wcells, cfg.run.seed, cfg.run.batch_size, threads, offset=len(cells))
    for c in cells:
        c.labels.setdefault("role", "fringe")
    allc, allr = cells + wcells, records + wrec
    report.records = allr
    report.tables["records"] = _records_table(allc, allr)

    pop_rec = _merge(wrec[:len(pop)])
    par_recs = wrec[len(pop):]
    par_est = estimate_parity(par_recs)
    V = min(1.0, abs(par_est.value))
    raw = swap_witness(pop_rec, V, par_est.sigma)
    C = confusion_matrix(ctx.instrument.D_up(sq.T), ctx.instrument.D_down(sq.T))
    w = mle_witness(pop_rec, par_recs, C, raw)
    report.results["witness"] = {
        "populations": raw.populations, "visibility": V, "visibility_sigma": par_est.sigma,
        "raw": w.value, "raw_sigma": w.sigma, "mle": w.mle_value, "mle_sigma": w.mle_sigma,
        "mle_boundary": w.boundary, "shots": WITNESS_SHOTS,
        "identity_holds": bool((w.value < 0) == (raw.populations < V)),
        "confusion": C.tolist(),
    }

    # Allan deviation of the per-shot parity contributions at pi/2
    series = _interleave_series(par_recs)
    top = len(series) // 8
    ad = allan_deviation(series, np.unique(np.round(np.logspace(0, math.log10(top), 15)).astype(int)))
    at = Table(["tau_shots", "adev", "n_terms"])
    for tau, a, n in zip(ad.taus, ad.adev, ad.n_terms):
        at.add(int(tau), float(a), int(n))
    report.tables["adev"] = at
    report.results["adev_slope"] = adev_slope(ad)

    report.check("amplitude", fit["A"], 0.18, 0.30)
    report.check("xi_mHz", report.results["xi_hz"] * 1e3, 0.7, 1.1)
    report.check("witness_raw", w.value, -0.22, -0.10)
    report.check("witness_mle", w.mle_value, -0.53, -0.29)


def _merge(records):
    from .engine import MeasurementRecord

    r0 = records[0]
    return MeasurementRecord(sum(r.n_UU for r in records), sum(r.n_DD for r in records),
                             sum(r.n_ONE for r in records), r0.T, r0.d, r0.phi_parity, 1,
                             sum(r.N * r.oracle for r in records) / sum(r.N for r in records))


def _interleave_series(records) -> np.ndarray:
    """Alternate the shots of the +/- cells into one parity-contribution series."""
    parts = [parity_series(r.outcomes, r.init_sign) for r in records]
    n = sum(len(p) for p in parts)
    out = np.empty(n)
    idx = [0] * len(parts)
    k = 0
    while k < n:
        for j, p in enumerate(parts):
            if idx[j] < len(p):
                out[k] = p[idx[j]]
                idx[j] += 1
                k += 1
    return out


FIG3C_TIMES = tuple(float(t) for t in range(1, 16, 2))


def campaign_fig3c(report, cfg, threads):
    ctx = cfg.context()
    sq = cfg.sequence
    cells = []
    for T in FIG3C_TIMES:
        cells += fringe_cells(ctx, T, sq.f0, [math.pi / 2], cfg.run.shots, sq.interleave, sq.init)
    records = run_cells(cells, cfg.run.seed, cfg.run.batch_size, threads)
    report.records = records
    report.tables["records"] = _records_table(cells, records)
    vt = Table(["T", "visibility", "sigma", "N", "model"])
    Ts, Vs, sV = [], [], []
    for T, items in _group(cells, records, "T").items():
        est = estimate_parity([r for _, r in items])
        model = expected_visibility(ctx, T, sq.f0)
        vt.add(T, est.value, est.sigma, est.N, model)
        Ts.append(T)
        Vs.append(est.value)
        sV.append(est.sigma)
    report.tables["visibility"] = vt
    alphas = [readout_contrast(ctx, T) for T in Ts]
    fit = fit_visibility_vs_time(Ts, Vs, alphas, sV, [dephasing_rate(ctx, T, sq.f0) for T in Ts])
    raw = fit_visibility_vs_time(Ts, Vs, alphas, sV)
    report.results.update(xi_hz=fit["xi"] / (2 * np.pi), xi_hz_sigma=fit.error("xi") / (2 * np.pi),
                          xi_hz_no_dephasing=raw["xi"] / (2 * np.pi))
    report.check("xi_mHz", fit["xi"] / (2 * np.pi) * 1e3, 0.9, 1.3)


def campaign_fig4(report, cfg, threads):
    base = cfg.context()
    sq = cfg.sequence
    cells = []
    ctxs = {}
    for d in DISTANCES:
        ctxs[d] = replace(base, d=d, xi=None, instrument=instrument_at_distance(base.instrument, d, sq.T))
        cells += fringe_cells(ctxs[d], sq.T, sq.f0, [math.pi / 2], cfg.run.shots, sq.interleave, sq.init, d=d)
    records = run_cells(cells, cfg.run.seed, cfg.run.batch_size, threads)
    report.records = records
    report.tables["records"] = _records_table(cells, records)
    t = Table(["d", "visibility", "sigma", "N", "alpha", "xi_hz", "xi_hz_sigma", "xi_theory_hz"])
    ds, xis, sx = [], [], []
    for d, items in _group(cells, records, "d").items():
        est = estimate_parity([r for _, r in items])
        alpha = readout_contrast(ctxs[d], sq.T)
        try:
            xi = fit_coupling_from_fringe(est.value, alpha, sq.T, est.sigma,
                                          dephasing_rate(ctxs[d], sq.T, sq.f0))
            x, s = xi["xi"], xi.error("xi")
        except ValueError:
            x, s = math.nan, math.nan
        t.add(d, est.value, est.sigma, est.N, alpha, x / (2 * np.pi), s / (2 * np.pi),
              coupling_strength(d) / (2 * np.pi))
        ds.append(d)
        xis.append(x)
        sx.append(s)
    report.tables["distance"] = t
    ok = np.isfinite(xis)
    fit = fit_power_law(np.array(ds)[ok], np.array(xis)[ok], np.array(sx)[ok])
    report.results.update(n=fit["n"], n_sigma=fit.error("n"), prefactor=fit["C"])
    report.check("n", fit["n"], 2.6, 3.4)


RUNNERS = {
    "fig2a": campaign_fig2a,
    "fig2b": campaign_fig2b,
    "fig2c": campaign_fig2c,
    "fig3a": campaign_fig3a,
    "fig3b": campaign_fig3b,
    "fig3c": campaign_fig3c,
    "fig4": campaign_fig4,
}


def campaign(name: str, overrides=None, shots: int | None = None, seed: int | None = None,
             threads: int = 1) -> CampaignReport:
    """Run a preset. Failures after configuration leave a report marked partial."""
    doc = apply_overrides(preset_document(name), overrides)
    if shots is not None:
        doc["run"]["shots"] = shots
    if seed is not None:
        doc["run"]["seed"] = seed
    cfg = config_from_dict(doc)
    conf = cfg.to_dict()
    report = CampaignReport(name, conf, {
        "campaign": name,
        "config_hash": cfg.fingerprint(),
        "seed": cfg.run.seed,
        "version": __version__,
    })
    try:
        RUNNERS[name](report, cfg, threads)
        oc = oracle_consistency(report.records)
        report.results["oracle"] = oc
        report.check("oracle_z", oc["z"], 0.0, 3.0)
    except Exception as exc:  # keep whatever was computed
        report.partial = True
        report.error = f"{type(exc).__name__}: {exc}"
    return report
