"""CSV serialization of solve reports and sweep tables.

Round-trip safe: floats are written with repr-precision and the readers
reproduce the numbers exactly.
"""

from __future__ import annotations

import csv

from porousmg.driver import SweepTable
from porousmg.krylov import SolveReport


def write_report_csv(report: SolveReport, path) -> None:
    scalars = {
        "iterations": report.iterations,
        "converged": report.converged,
        "final_relative_residual": repr(report.final_relative_residual),
    }
    for key, val in sorted(report.wall_time.items()):
        scalars[f"time_{key}"] = repr(val)
    for key, val in sorted(report.config.items()):
        scalars[f"config_{key}"] = val
    scalars["residual_history"] = ";".join(repr(float(r)) for r in report.residual_history)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(scalars.keys()))
        writer.writerow([str(v) for v in scalars.values()])


def read_report_csv(path) -> dict:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) != 2:
        raise ValueError(f"report CSV must have a header and one row, got {len(rows)}")
    out = dict(zip(rows[0], rows[1]))
    out["iterations"] = int(out["iterations"])
    out["converged"] = out["converged"] == "True"
    out["final_relative_residual"] = float(out["final_relative_residual"])
    out["residual_history"] = [float(v) for v in out["residual_history"].split(";")]
    for key in list(out):
        if key.startswith("time_"):
            out[key] = float(out[key])
    return out


def write_sweep_csv(table: SweepTable, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["grid"] + table.column_labels())
        for grid, row in zip(table.grids, table.counts):
            writer.writerow([grid] + [str(c) for c in row])


def read_sweep_csv(path) -> tuple[list[str], list[str], list[list]]:
    """Returns (grids, column labels, counts); 'DNF' entries stay strings."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    labels = rows[0][1:]
    grids = [r[0] for r in rows[1:]]
    counts = [
        [c if c == "DNF" else int(c) for c in r[1:]]
        for r in rows[1:]
    ]
    return grids, labels, counts
