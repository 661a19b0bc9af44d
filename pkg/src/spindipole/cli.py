"""Command-line front end.

    spindipole simulate CONFIG
    spindipole campaign NAME [--override section.key=value ...]
    spindipole fit RECORDS.csv [--alpha A --T T]
    spindipole adev SHOTS.csv
    spindipole calibrate TABLE.csv [--readout pair|spin] [--at X]

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 a result fell outside its acceptance band (``--check``).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .campaigns import CAMPAIGNS, campaign, oracle_consistency
from .config import ConfigError, apply_overrides, config_from_dict, load_yaml
from .engine import MeasurementRecord, run_experiment
from .inference import (
    adev_slope,
    allan_deviation,
    estimate_parity,
    fit_coupling_from_fringe,
    fit_fringe,
    parity_series,
)
from .instrument import detection_contrast, fidelity_from_calibration, read_calibration_table, InstrumentModel
from .report import CampaignReport, Table, dumps_json, emit_outputs, read_table

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_BAND = 0, 2, 3, 4
OUTCOME_NAMES = {"UU": 0, "DD": 1, "ONE": 2}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (overrides the configuration)")
    p.add_argument("--shots", type=int, help="shots per grid point")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.add_argument("--threads", type=int, default=1, help="worker threads for grid cells")
    p.add_argument("--check", action="store_true", help="exit with 4 if a result misses its band")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spindipole", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the experiment described by a configuration file")
    p.add_argument("config")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    _common(p)

    p = sub.add_parser("campaign", help="run a preset campaign")
    p.add_argument("name", choices=CAMPAIGNS)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    _common(p)

    p = sub.add_parser("fit", help="fit a parity fringe from a records table")
    p.add_argument("records")
    p.add_argument("--alpha", type=float, help="parity contrast, to convert the amplitude to a coupling")
    p.add_argument("--T", type=float, help="experiment time (s) for the coupling")

    p = sub.add_parser("adev", help="Allan deviation of a per-shot outcome table")
    p.add_argument("shots")
    p.add_argument("--out-dir")

    p = sub.add_parser("calibrate", help="fit detection-fidelity lines to a calibration table")
    p.add_argument("table")
    p.add_argument("--readout", choices=("pair", "spin"), default="pair")
    p.add_argument("--at", type=float, help="report fidelities and contrast at this abscissa")
    return ap


def _records_from_table(t: Table) -> list[MeasurementRecord]:
    col = {c: i for i, c in enumerate(t.columns)}
    for need in ("n_UU", "n_DD", "n_ONE", "phi_parity"):
        if need not in col:
            raise ValueError(f"records table lacks column {need!r}")
    out = []
    for r in t.rows:
        if not isinstance(r[col["phi_parity"]], float):
            continue
        out.append(MeasurementRecord(
            int(r[col["n_UU"]]), int(r[col["n_DD"]]), int(r[col["n_ONE"]]),
            float(r[col["T"]]) if "T" in col else math.nan,
            float(r[col["d"]]) if "d" in col and isinstance(r[col["d"]], float) else math.nan,
            float(r[col["phi_parity"]]),
            int(r[col["init_sign"]]) if "init_sign" in col else 1,
        ))
    if not out:
        raise ValueError("records table holds no rows")
    return out


def cmd_simulate(args) -> CampaignReport:
    import yaml

    path = Path(args.config)
    try:
        doc = load_yaml(path.read_text())
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    doc = apply_overrides(doc, args.override) if isinstance(doc, dict) else doc
    if isinstance(doc, dict):
        run = doc.setdefault("run", {})
        if args.seed is not None:
            run["seed"] = args.seed
        if args.shots is not None:
            run["shots"] = args.shots
    cfg = config_from_dict(doc, path.parent)
    report = CampaignReport("simulate", cfg.to_dict(), {
        "campaign": "simulate", "config_hash": cfg.fingerprint(), "seed": cfg.run.seed, "version": __version__,
    })
    records = run_experiment(cfg, threads=args.threads)
    report.records = records
    rt = Table(["cell", "T", "d", "phi_parity", "init_sign", "n_UU", "n_DD", "n_ONE", "N",
                "oracle_UU", "oracle_DD", "oracle_ONE"])
    st = Table(["cell", "shot", "init_sign", "outcome"])
    names = ["UU", "DD", "ONE"]
    for i, r in enumerate(records):
        rt.add(i, r.T, r.d, r.phi_parity, r.init_sign, r.n_UU, r.n_DD, r.n_ONE, r.N, *map(float, r.oracle))
        for k, o in enumerate(r.outcomes):
            st.add(i, k, r.init_sign, names[int(o)])
    report.tables["records"] = rt
    report.tables["shots"] = st
    ft = Table(["phi_parity", "parity", "sigma", "N"])
    phis, vals, sigs = [], [], []
    for phi in cfg.sequence.phi_parity:
        est = estimate_parity([r for r in records if r.phi_parity == phi])
        ft.add(phi, est.value, est.sigma, est.N)
        phis.append(phi)
        vals.append(est.value)
        sigs.append(est.sigma)
    report.tables["fringe"] = ft
    if len(set(phis)) >= 3:
        sig = np.array(sigs)
        fit = fit_fringe(phis, vals, sig if np.all(sig > 0) else None)
        report.results.update(amplitude=fit["A"], amplitude_sigma=fit.error("A"))
    oc = oracle_consistency(records)
    report.results["oracle"] = oc
    report.check("oracle_z", oc["z"], 0.0, 3.0)
    return report


def cmd_campaign(args) -> CampaignReport:
    return campaign(args.name, args.override, args.shots, args.seed, args.threads)


def cmd_fit(args) -> dict:
    records = _records_from_table(read_table(args.records))
    phis = sorted({r.phi_parity for r in records})
    ests = [estimate_parity([r for r in records if r.phi_parity == p]) for p in phis]
    sig = np.array([e.sigma for e in ests])
    fit = fit_fringe(phis, [e.value for e in ests], sig if np.all(sig > 0) else None)
    out = {"amplitude": fit["A"], "amplitude_sigma": fit.error("A"), "dof": fit.dof, "rss": fit.rss,
           "points": [{"phi_parity": p, "parity": e.value, "sigma": e.sigma, "N": e.N} for p, e in zip(phis, ests)]}
    if args.alpha is not None and args.T is not None:
        xi = fit_coupling_from_fringe(fit, args.alpha, args.T)
        out.update(xi_hz=xi["xi"] / (2 * math.pi), xi_hz_sigma=xi.error("xi") / (2 * math.pi))
    return out


def cmd_adev(args) -> dict:
    t = read_table(args.shots)
    if "outcome" not in t.columns:
        raise ValueError("shot table lacks an 'outcome' column")
    outs = np.array([OUTCOME_NAMES[o] if isinstance(o, str) else int(o) for o in t.column("outcome")])
    signs = np.array(t.column("init_sign"), dtype=float) if "init_sign" in t.columns else np.ones(len(outs))
    series = parity_series(outs) * signs
    res = allan_deviation(series)
    return {"slope": adev_slope(res), "taus": res.taus.tolist(), "adev": res.adev.tolist(),
            "n_terms": res.n_terms.tolist(), "shots": len(series)}


def cmd_calibrate(args) -> dict:
    up, down = fidelity_from_calibration(read_calibration_table(args.table), args.readout)
    out = {"readout": args.readout,
           "up": {"intercept": up.intercept, "slope": up.slope},
           "down": {"intercept": down.intercept, "slope": down.slope}}
    if args.at is not None:
        m = InstrumentModel(up=up, down=down)
        out.update(at=args.at, D_up=m.D_up(args.at), D_down=m.D_down(args.at),
                   alpha=detection_contrast(m, args.at))
    return out


def _summarize(report: CampaignReport) -> None:
    status = "PARTIAL" if report.partial else "ok"
    print(f"{report.name}: {status} (config {report.provenance['config_hash']}, seed {report.provenance['seed']})")
    if report.error:
        print(f"  error: {report.error}")
    for c in report.checks:
        print(f"  {'PASS' if c.passed else 'MISS'} {c.name} = {c.value:.6g} in [{c.lo:g}, {c.hi:g}]")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("simulate", "campaign"):
            report = cmd_simulate(args) if args.command == "simulate" else cmd_campaign(args)
            out_dir = args.out_dir or report.config["run"]["out_dir"]
            for p in emit_outputs(report, out_dir, args.format):
                print(f"wrote {p}")
            _summarize(report)
            if report.partial:
                return EXIT_RUNTIME
            if args.check and not report.passed:
                return EXIT_BAND
            return EXIT_OK
        handler = {"fit": cmd_fit, "adev": cmd_adev, "calibrate": cmd_calibrate}[args.command]
        result = handler(args)
        text = dumps_json(result)
        if getattr(args, "out_dir", None):
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            (Path(args.out_dir) / f"{args.command}.json").write_text(text)
        sys.stdout.write(text)
        return EXIT_OK
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
