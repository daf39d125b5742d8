"""Per-trial result rows, percentile summaries and their CSV form.

Percentiles use the nearest-rank definition: for ``n`` sorted finite
values the ``p``-th percentile is the value at 1-based rank
``ceil(p n / 100)``.  Floats are written with ``repr`` so a CSV round trip
is bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

PERCENTILES = (50, 75, 90)
TIMING_COLUMNS = ("wall_time", "time_per_iteration")


class ReportError(ValueError):
    pass


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile of the finite entries of ``values`` (NaN if none)."""
    if not 0 < p <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    xs = sorted(v for v in values if math.isfinite(v))
    if not xs:
        return math.nan
    rank = max(1, math.ceil(p * len(xs) / 100))
    return xs[rank - 1]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


@dataclass
class ExperimentReport:
    """Rows of one experiment plus the metrics to summarize per (method, condition).

    ``rows`` are dicts sharing the keys in ``columns``.  Rows whose
    ``degenerate`` flag is set are kept in ``rows.csv`` but excluded from
    summaries.
    """

    columns: tuple
    metrics: tuple
    rows: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    stage_columns: tuple = ("method", "condition", "trial", "iteration", "stage", "mu", "f", "objective", "inliers")

    def groups(self):
        out = {}
        for row in self.rows:
            out.setdefault((row["method"], row["condition"]), []).append(row)
        return out

    def summary(self):
        """One summary row per (method, condition), in first-seen order."""
        table = []
        for (method, condition), rows in self.groups().items():
            used = [r for r in rows if not r.get("degenerate", False)]
            entry = {"method": method, "condition": condition, "trials": len(used)}
            entry["failures"] = sum(1 for r in used if r.get("failed"))
            if "success" in self.columns:
                entry["success_rate"] = sum(1 for r in used if r["success"]) / len(used) if used else math.nan
            for metric in self.metrics:
                vals = [float(r[metric]) for r in used]
                for p in PERCENTILES:
                    entry[f"{metric}_p{p}"] = nearest_rank(vals, p)
            times = [float(r["wall_time"]) for r in used]
            entry["mean_wall_time"] = math.fsum(times) / len(times) if times else math.nan
            if "time_per_iteration" in self.columns:
                per_it = [float(r["time_per_iteration"]) for r in used]
                entry["mean_time_per_iteration"] = math.fsum(per_it) / len(per_it) if per_it else math.nan
            table.append(entry)
        return table

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "rows.csv", self.columns, self.rows)
        summary = self.summary()
        _write_csv(out / "summary.csv", tuple(summary[0]) if summary else ("method", "condition"), summary)
        _write_csv(out / "stages.csv", self.stage_columns, self.stages)
        return out

    @classmethod
    def load(cls, out_dir, metrics) -> "ExperimentReport":
        """Read ``rows.csv`` back and check ``summary.csv`` against the recomputed summary."""
        out = Path(out_dir)
        columns, raw = _read_csv(out / "rows.csv")
        report = cls(tuple(columns), tuple(metrics), [_parse_row(r) for r in raw])
        stage_path = out / "stages.csv"
        if stage_path.exists():
            stage_columns, stages = _read_csv(stage_path)
            report.stage_columns = tuple(stage_columns)
            report.stages = [_parse_row(r) for r in stages]
        _, stored = _read_csv(out / "summary.csv")
        expected = report.summary()
        if len(stored) != len(expected):
            raise ReportError("summary.csv row count does not match rows.csv")
        for got, want in zip(stored, expected):
            for key, value in want.items():
                if _fmt(value) != got.get(key):
                    raise ReportError(f"summary.csv {key} for {want['method']}/{want['condition']} is {got.get(key)!r}, rows give {_fmt(value)!r}")
        return report


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return reader.fieldnames or [], rows


_INT_COLUMNS = {"trial", "iterations", "stages", "iteration", "stage", "inliers", "n", "rate_index"}
_BOOL_COLUMNS = {"success", "converged", "degenerate"}
_TEXT_COLUMNS = {"method", "condition", "failed", "difficulty"}


def _parse_row(raw):
    row = {}
    for key, text in raw.items():
        if key in _TEXT_COLUMNS:
            row[key] = text
        elif key in _BOOL_COLUMNS:
            row[key] = text == "1"
        elif key in _INT_COLUMNS:
            row[key] = int(text)
        else:
            row[key] = float(text) if text != "" else math.nan
    return row
