"""Result containers and the on-disk report format.

An output directory holds

* ``summary.txt``       human-readable checks and tables
* ``summary.json``      the same content, machine-readable
* ``<table>.csv``       one columnar file per table or time series
* ``trajectories.jsonl`` one JSON object per stored trajectory row
* ``figures/*.png``     optional plots of the CSV data

Every file starts with (or embeds) the config hash and seed.  Floats are
written with ``repr`` so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


@dataclass
class Check:
    """One acceptance comparison; ``passed is None`` marks a reported-only value."""

    name: str
    measured: float
    target: float
    tolerance: str
    passed: bool | None

    @property
    def status(self) -> str:
        return "REPORT" if self.passed is None else ("PASS" if self.passed else "FAIL")


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(list(values))


@dataclass
class Report:
    experiment: str
    config_hash: str
    seed: int
    config: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    trajectories: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def check(self, name, measured, target, tolerance, passed):
        self.checks.append(Check(name, float(measured), float(target), tolerance,
                                 None if passed is None else bool(passed)))

    def table(self, name: str, columns) -> Table:
        self.tables[name] = Table(list(columns))
        return self.tables[name]

    @property
    def all_passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    @property
    def header(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed, "code_version": __version__}


def _clean(value):
    """JSON-safe scalar: NaN/inf become None, numpy scalars become Python ones."""
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _fmt(value) -> str:
    value = _clean(value)
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def _json_tree(obj):
    if isinstance(obj, dict):
        return {str(k): _json_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_tree(v) for v in obj]
    return _clean(obj)


def render_summary(report: Report) -> str:
    out = io.StringIO()
    out.write(f"experiment: {report.experiment}\n")
    out.write(f"config_hash: {report.config_hash}\nseed: {report.seed}\ncode_version: {__version__}\n\n")
    out.write("checks:\n")
    if not report.checks:
        out.write("  (none)\n")
    for c in report.checks:
        out.write(f"  {c.status:6s} {c.name}: measured={_fmt(c.measured)} target={_fmt(c.target)} "
                  f"tolerance={c.tolerance}\n")
    for name, table in report.tables.items():
        out.write(f"\n[{name}] {len(table.rows)} rows\n")
        widths = [max([len(col)] + [len(_fmt(r[i])) for r in table.rows]) for i, col in enumerate(table.columns)]
        out.write("  " + "  ".join(col.rjust(w) for col, w in zip(table.columns, widths)) + "\n")
        for row in table.rows:
            out.write("  " + "  ".join(_fmt(v).rjust(w) for v, w in zip(row, widths)) + "\n")
    for note in report.notes:
        out.write(f"\nnote: {note}\n")
    return out.getvalue()


def render_csv(report: Report, table: Table) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={report.config_hash} seed={report.seed} code_version={__version__}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_report(report: Report, out_dir, figures: bool = True) -> list[Path]:
    """Write every report file into ``out_dir``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out_dir / name
        path.write_text(text)
        written.append(path)

    put("summary.txt", render_summary(report))
    summary = {
        **report.header,
        "experiment": report.experiment,
        "all_passed": report.all_passed,
        "config": _json_tree(report.config),
        "checks": [{"name": c.name, "status": c.status, "measured": _clean(c.measured),
                    "target": _clean(c.target), "tolerance": c.tolerance} for c in report.checks],
        "tables": {name: {"columns": t.columns, "rows": _json_tree(t.rows)}
                   for name, t in report.tables.items()},
        "notes": report.notes,
    }
    put("summary.json", json.dumps(summary, sort_keys=True, indent=1, allow_nan=False) + "\n")
    for name, table in report.tables.items():
        put(f"{name}.csv", render_csv(report, table))
    lines = [_dumps({"header": report.header})]
    lines += [_dumps(_json_tree(row)) for row in report.trajectories]
    put("trajectories.jsonl", "\n".join(lines) + "\n")
    if figures:
        from .plotting import render_figures

        written += render_figures(report, out_dir / "figures")
    return written
