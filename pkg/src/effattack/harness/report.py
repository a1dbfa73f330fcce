"""Report serialisation: a Table-1 style CSV and a full JSON dump."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("scenario_id", "behavior", "attack", "mode", "epsilon", "flops_pct", "latency_pct",
               "energy_pct", "detection_rate", "benign_quality", "adv_quality", "seed")
PCT_COLUMNS = ("flops_pct", "latency_pct", "energy_pct")
RATE_COLUMNS = ("detection_rate", "benign_quality", "adv_quality")
PCT_DIGITS = 2
RATE_DIGITS = 4


def format_cell(column, value) -> str:
    if value is None:
        return ""
    if column in PCT_COLUMNS:
        return f"{value:.{PCT_DIGITS}f}"
    if column in RATE_COLUMNS:
        return f"{value:.{RATE_DIGITS}f}"
    if column == "epsilon":
        return f"{value:g}"
    return str(value)


def rounded(column, value):
    """The value a CSV cell parses back to."""
    if value is None:
        return None
    if column in PCT_COLUMNS:
        return round(value, PCT_DIGITS)
    if column in RATE_COLUMNS:
        return round(value, RATE_DIGITS)
    return value


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([format_cell(c, row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _plain(obj):
    # JSON has no infinities; write them as strings the scenario loader accepts
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            raise ValueError("NaN in report")
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_to_json(report) -> str:
    return json.dumps(_plain(report.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_to_csv(report) -> str:
    return rows_to_csv(report.rows())


def emit_report(report, fmt="csv", path=None) -> Path:
    """Write ``report`` as CSV or JSON. ``path`` may be a directory, in which
    case the file is named after the scenario id. Returns the file path."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    path = Path(path if path is not None else ".")
    if path.is_dir() or not path.suffix:
        path.mkdir(parents=True, exist_ok=True)
        path = path / f"{report.scenario_id}.{fmt}"
    text = report_to_csv(report) if fmt == "csv" else report_to_json(report)
    path.write_text(text)
    return path


def read_rows(path) -> list:
    """Table rows from a CSV report, or the ``rows`` of a JSON report."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        rows = json.loads(text)["rows"]
        return [{c: format_cell(c, r[c]) for c in CSV_COLUMNS} for r in rows]
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
    return list(reader)


def merge_reports(paths) -> str:
    """Concatenate the rows of several reports under a single header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in paths:
        for row in read_rows(p):
            w.writerow([row[c] for c in CSV_COLUMNS])
    return buf.getvalue()
