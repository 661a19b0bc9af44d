"""
Campaign reports and their byte-stable serialization.

A report is written as ``<name>.json`` (sorted keys, floats to 12
significant digits) plus one ``<name>_<table>.csv`` per table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SIG_DIGITS = 12


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} entries, table has {len(self.columns)} columns")
        self.rows.append(list(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


@dataclass
class Check:
    name: str
    value: float
    lo: float
    hi: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.lo <= self.value <= self.hi)


@dataclass
class CampaignReport:
    name: str
    config: dict
    provenance: dict
    tables: dict[str, Table] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    records: list = field(default_factory=list, repr=False)
    partial: bool = False
    error: str | None = None

    def check(self, name: str, value: float, lo: float, hi: float) -> Check:
        c = Check(name, float(value), float(lo), float(hi))
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return not self.partial and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "campaign": self.name,
            "status": "partial" if self.partial else "complete",
            "error": self.error,
            "provenance": self.provenance,
            "config": self.config,
            "results": self.results,
            "checks": [{"name": c.name, "value": c.value, "lo": c.lo, "hi": c.hi, "passed": c.passed}
                       for c in self.checks],
        }


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), f".{SIG_DIGITS}g")


def _clean(obj):
    """Round floats to fixed precision; make everything JSON-representable."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt_float(x)
        return float(fmt_float(x))
    return obj


def dumps_json(data) -> str:
    return json.dumps(_clean(data), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def dumps_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def emit_outputs(report: CampaignReport, out_dir, fmt: str = "both") -> list[Path]:
    """Write the report; ``fmt`` is ``json``, ``csv`` or ``both``. Returns the paths written."""
    if fmt not in ("json", "csv", "both"):
        raise ValueError("format must be json, csv or both")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = []
    if fmt in ("json", "both"):
        p = out / f"{report.name}.json"
        p.write_text(dumps_json(report.to_dict()))
        written.append(p)
    if fmt in ("csv", "both"):
        for tname in sorted(report.tables):
            p = out / f"{report.name}_{tname}.csv"
            p.write_text(dumps_csv(report.tables[tname]))
            written.append(p)
    return written


def read_table(path) -> Table:
    """Read a CSV written by :func:`emit_outputs`; numeric cells become floats."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty table")
    t = Table(rows[0])
    for r in rows[1:]:
        vals = []
        for c in r:
            try:
                vals.append(float(c))
            except ValueError:
                vals.append(c)
        t.rows.append(vals)
    return t
