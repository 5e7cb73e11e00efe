"""Deterministic CSV writing: fixed column order, LF newlines, floats
rendered with 17 significant digits so round-trips are bit-exact."""

from __future__ import annotations

import csv
import numbers


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(report, path):
    """Write a report (anything with ``.table()``) or an explicit
    (header, rows) pair to ``path``."""
    if hasattr(report, "table"):
        header, rows = report.table()
    else:
        header, rows = report
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_csv(path):
    """Read back a CSV written by :func:`write_csv` as (header, rows of str)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        return [], []
    return rows[0], rows[1:]
