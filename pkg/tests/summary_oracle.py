"""Recompute summary statistics from raw trace files with the standard library only."""

import csv
import math
import statistics
from pathlib import Path


def recompute(run_dir):
    out = {}
    for cell in sorted(p for p in Path(run_dir).iterdir() if p.is_dir() and p.name != "replay"):
        traces = []
        for path in sorted(cell.glob("rep_[0-9][0-9][0-9].csv")):
            with open(path, newline="") as fh:
                traces.append([float(row["gap"]) for row in csv.DictReader(fh)])
        if not traces:
            continue
        n = max(len(t) for t in traces)
        traces = [t + [t[-1]] * (n - len(t)) for t in traces]
        for i in range(n):
            col = [math.log10(max(t[i], 0.0) + 1e-12) for t in traces]
            q1, med, q3 = statistics.quantiles(col, n=4, method="inclusive")
            out[(cell.name, i + 1)] = (statistics.median(col), q1, q3)
    return out


def read_summary(path):
    with open(path, newline="") as fh:
        return {(r["cell_id"], int(r["iteration"])): (float(r["median"]), float(r["q25"]), float(r["q75"]))
                for r in csv.DictReader(fh)}
