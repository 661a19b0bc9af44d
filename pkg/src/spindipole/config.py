"""
Experiment configuration: a YAML document with nested sections.

    geometry:   d (m) or f_trap (Hz), exactly one
    field:      B0 (T), grad (T/m, static gradient)
    noise:      collective_rms (T), collective_corr_time (s), grad_static (T/m),
                grad_rms (T/m), grad_corr_time (s)
    instrument: prep_fidelity, entangled_fidelity, pulse_error (rad),
                up / down: {intercept, slope} per-spin fidelity lines in T,
                or calibration: CSV path plus readout: pair | spin
    sequence:   T (s, required), f0 (Hz or null), phi_parity (list of rad),
                interleave, init (ud | du), analysis, prep (product | psi+), dt (s)
    run:        shots (required), seed (required), batch_size, out_dir

Unknown keys are errors. All problems are collected before raising.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .engine import BATCH_SIZE, SimContext
from .instrument import (
    FidelityLine,
    InstrumentModel,
    fidelity_from_calibration,
    read_calibration_table,
)
from .noise import NoiseConfig
from .physics import FieldConfig, ion_separation


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent-only floats such as ``1e-6``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class GeometrySection:
    d: float | None = None
    f_trap: float | None = None

    @property
    def distance(self) -> float:
        return self.d if self.d is not None else ion_separation(self.f_trap)


@dataclass(frozen=True)
class FieldSection:
    B0: float = 0.44e-3
    grad: float = 0.0


@dataclass(frozen=True)
class NoiseSection:
    collective_rms: float = 0.0
    collective_corr_time: float = 10e-3
    grad_static: float = 0.0
    grad_rms: float = 0.0
    grad_corr_time: float = 20e-3


@dataclass(frozen=True)
class LineSection:
    intercept: float = 1.0
    slope: float = 0.0


@dataclass(frozen=True)
class InstrumentSection:
    prep_fidelity: float = 0.99
    entangled_fidelity: float = 0.95
    pulse_error: float = 0.0
    up: LineSection = LineSection()
    down: LineSection = LineSection()
    calibration: str | None = None
    readout: str = "pair"


@dataclass(frozen=True)
class SequenceSection:
    T: float = 15.0
    f0: float | None = 2.0
    phi_parity: tuple[float, ...] = (math.pi / 2,)
    interleave: bool = True
    init: str = "ud"
    analysis: bool = True
    prep: str = "product"
    dt: float = 1e-3


@dataclass(frozen=True)
class RunSection:
    shots: int = 500
    seed: int = 0
    batch_size: int = BATCH_SIZE
    out_dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometrySection
    run: RunSection
    sequence: SequenceSection = SequenceSection()
    field: FieldSection = FieldSection()
    noise: NoiseSection = NoiseSection()
    instrument: InstrumentSection = InstrumentSection()

    @property
    def d(self) -> float:
        return self.geometry.distance

    def instrument_model(self) -> InstrumentModel:
        ins = self.instrument
        if ins.calibration is not None:
            up, down = fidelity_from_calibration(read_calibration_table(ins.calibration), ins.readout)
        else:
            up = FidelityLine(ins.up.intercept, ins.up.slope)
            down = FidelityLine(ins.down.intercept, ins.down.slope)
        return InstrumentModel(ins.prep_fidelity, up, down, ins.entangled_fidelity,
                               pulse_error=ins.pulse_error)

    def context(self) -> SimContext:
        return SimContext(
            d=self.d,
            field=FieldConfig(self.field.B0, self.field.grad),
            noise=NoiseConfig(**dataclasses.asdict(self.noise)),
            instrument=self.instrument_model(),
            dt=self.sequence.dt,
            prep=self.sequence.prep,
        )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["sequence"]["phi_parity"] = list(self.sequence.phi_parity)
        out["geometry"] = {k: v for k, v in out["geometry"].items() if v is not None}
        if self.instrument.calibration is None:
            del out["instrument"]["calibration"]
        order = ["geometry", "field", "noise", "instrument", "sequence", "run"]
        return {k: out[k] for k in order}

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


SECTIONS = {
    "geometry": GeometrySection,
    "field": FieldSection,
    "noise": NoiseSection,
    "instrument": InstrumentSection,
    "sequence": SequenceSection,
    "run": RunSection,
}
REQUIRED = {"sequence": ["T"], "run": ["shots", "seed"]}


def _num(errors, where, v, kind=float, positive=False, nonneg=False, optional=False):
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not float(v).is_integer()):
        errors.append(f"{where}: expected {'an integer' if kind is int else 'a number'}, got {v!r}")
        return None
    v = kind(v)
    if kind is float and not math.isfinite(v):
        errors.append(f"{where}: must be finite")
    elif positive and v <= 0:
        errors.append(f"{where}: must be positive, got {v!r}")
    elif nonneg and v < 0:
        errors.append(f"{where}: must be non-negative, got {v!r}")
    return v


def _check_keys(errors, where, data, cls):
    names = {f.name for f in dataclasses.fields(cls)}
    if not isinstance(data, dict):
        errors.append(f"{where}: expected a mapping")
        return {}
    for k in data:
        if k not in names:
            errors.append(f"{where}.{k}: unknown key")
    return {k: v for k, v in data.items() if k in names}


def _line(errors, where, data):
    data = _check_keys(errors, where, data, LineSection)
    vals = {k: _num(errors, f"{where}.{k}", v) for k, v in data.items()}
    return LineSection(**{k: v for k, v in vals.items() if v is not None})


def config_from_dict(doc: Any, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed document; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a mapping of sections"])
    for k in doc:
        if k not in SECTIONS:
            errors.append(f"{k}: unknown key")
    for sec, keys in REQUIRED.items():
        for k in keys:
            if not isinstance(doc.get(sec), dict) or k not in doc[sec]:
                errors.append(f"{sec}.{k}: missing required key")
    if "geometry" not in doc:
        errors.append("geometry: missing required section (give d or f_trap)")

    g = _check_keys(errors, "geometry", doc.get("geometry", {}), GeometrySection)
    if "geometry" in doc and (("d" in g) == ("f_trap" in g)):
        errors.append("geometry: give exactly one of d or f_trap")
    geometry = GeometrySection(**{k: _num(errors, f"geometry.{k}", v, positive=True) for k, v in g.items()})

    fd = _check_keys(errors, "field", doc.get("field", {}), FieldSection)
    fvals = {"B0": _num(errors, "field.B0", fd["B0"], nonneg=True) if "B0" in fd else None,
             "grad": _num(errors, "field.grad", fd["grad"]) if "grad" in fd else None}
    field_ = FieldSection(**{k: v for k, v in fvals.items() if v is not None})

    nd = _check_keys(errors, "noise", doc.get("noise", {}), NoiseSection)
    nvals = {}
    for k, v in nd.items():
        nvals[k] = _num(errors, f"noise.{k}", v, positive=k.endswith("corr_time"),
                        nonneg=k.endswith("rms"))
    noise = NoiseSection(**{k: v for k, v in nvals.items() if v is not None})

    idoc = _check_keys(errors, "instrument", doc.get("instrument", {}), InstrumentSection)
    ivals: dict[str, Any] = {}
    for k in ("prep_fidelity", "entangled_fidelity"):
        if k in idoc:
            v = _num(errors, f"instrument.{k}", idoc[k])
            if v is not None and not 0 <= v <= 1:
                errors.append(f"instrument.{k}: must lie in [0, 1]")
            ivals[k] = v
    if "pulse_error" in idoc:
        ivals["pulse_error"] = _num(errors, "instrument.pulse_error", idoc["pulse_error"], nonneg=True)
    for k in ("up", "down"):
        if k in idoc:
            ivals[k] = _line(errors, f"instrument.{k}", idoc[k])
    if "readout" in idoc:
        if idoc["readout"] not in ("pair", "spin"):
            errors.append("instrument.readout: must be 'pair' or 'spin'")
        ivals["readout"] = idoc["readout"]
    if idoc.get("calibration") is not None:
        p = Path(str(idoc["calibration"]))
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.is_file():
            errors.append(f"instrument.calibration: file not found: {p}")
        elif "up" in idoc or "down" in idoc:
            errors.append("instrument: give either calibration or up/down lines, not both")
        ivals["calibration"] = str(p.resolve())
    instrument = InstrumentSection(**{k: v for k, v in ivals.items() if v is not None})

    sd = _check_keys(errors, "sequence", doc.get("sequence", {}), SequenceSection)
    svals: dict[str, Any] = {}
    if "T" in sd:
        svals["T"] = _num(errors, "sequence.T", sd["T"], nonneg=True)
    if "f0" in sd:
        f0 = _num(errors, "sequence.f0", sd["f0"], positive=True, optional=True)
        if f0 is not None or sd["f0"] is None:
            svals["f0"] = f0
    if "dt" in sd:
        svals["dt"] = _num(errors, "sequence.dt", sd["dt"], positive=True)
    if "phi_parity" in sd:
        raw = sd["phi_parity"]
        raw = raw if isinstance(raw, list) else [raw]
        phis = [_num(errors, "sequence.phi_parity", v) for v in raw]
        if not raw:
            errors.append("sequence.phi_parity: empty grid")
        svals["phi_parity"] = tuple(p for p in phis if p is not None)
    for k in ("interleave", "analysis"):
        if k in sd:
            if not isinstance(sd[k], bool):
                errors.append(f"sequence.{k}: expected true or false")
            svals[k] = sd[k]
    for k, allowed in (("init", ("ud", "du")), ("prep", ("product", "psi+"))):
        if k in sd:
            if sd[k] not in allowed:
                errors.append(f"sequence.{k}: must be one of {', '.join(allowed)}")
            svals[k] = sd[k]
    sequence = SequenceSection(**{k: v for k, v in svals.items() if v is not None or k == "f0"})
    T, f0 = sequence.T, sequence.f0
    if T is not None and f0 and T > 0:
        x = T * f0
        if abs(x - round(x)) > 1e-9 * max(1.0, x) or round(x) % 2:
            errors.append(f"sequence: T*f0 = {x:g} must be an even integer")

    rd = _check_keys(errors, "run", doc.get("run", {}), RunSection)
    rvals: dict[str, Any] = {}
    for k in ("shots", "seed", "batch_size"):
        if k in rd:
            rvals[k] = _num(errors, f"run.{k}", rd[k], kind=int, positive=(k != "seed"), nonneg=True)
    if "out_dir" in rd:
        rvals["out_dir"] = str(rd["out_dir"])
    run = RunSection(**{k: v for k, v in rvals.items() if v is not None})

    if not errors:
        try:
            cfg = ExperimentConfig(geometry, run, sequence, field_, noise, instrument)
            cfg.context()
            cfg.context().noise.check_resolution(sequence.dt)
        except (ValueError, OSError) as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = load_yaml(path.read_text())
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    return config_from_dict(doc, path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def write_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars/lists."""
    doc = copy.deepcopy(doc)
    errors = []
    for item in overrides or []:
        if "=" not in item:
            errors.append(f"override {item!r}: expected key=value")
            continue
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                errors.append(f"override {key}: {p} is not a section")
                break
        else:
            try:
                node[parts[-1]] = load_yaml(val)
            except yaml.YAMLError:
                errors.append(f"override {key}: cannot parse value {val!r}")
    if errors:
        raise ConfigError(errors)
    return doc
