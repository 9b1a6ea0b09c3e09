"""Trace/report persistence and plot-data emission."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from . import lanechange as lc
from .runner import TRACE_COLUMNS, Trace, TraceRow, lyapunov_failures, value_records
from .solver import check_lyapunov


class OutputError(OSError):
    pass


def _fmt(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_trace_csv(trace: Trace, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in trace.rows:
                w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


_INT_COLS = {"s", "a", "feasible_count"}


def read_trace_csv(path) -> Trace:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            vals = {}
            for c in TRACE_COLUMNS:
                raw = rec[c]
                if raw == "":
                    vals[c] = None
                else:
                    vals[c] = int(raw) if c in _INT_COLS else float(raw)
            rows.append(TraceRow(**vals))
    return Trace(rows)


def replay_monitors(trace: Trace, params: lc.LaneChangeParams, tol: float = 1e-9) -> dict:
    """Verdicts recomputable from the trace alone (value decrease, nonempty
    admissible sets)."""
    recs = value_records(trace.rows, params)
    out = {"admissible_ok": all(r.feasible_count > 0 for r in trace.rows)}
    if recs:
        out["lyapunov_ok"] = check_lyapunov(recs, tol).holds
        out["lyapunov_failures"] = [trace.rows[k].t for k in lyapunov_failures(recs, tol)]
    else:
        out["lyapunov_ok"] = None
        out["lyapunov_failures"] = []
    return out


def write_report_json(report, path, extra=None) -> Path:
    path = Path(path)
    d = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    if extra:
        d.update(extra)
    try:
        path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def plot_series(trace: Trace) -> dict:
    """(t, value) pairs for the state timeline, lateral position and rear gap."""
    rows = trace.rows
    return {
        "state": [(r.t, r.s) for r in rows],
        "lateral": [(r.t, r.y_hv) for r in rows],
        "gap": [(r.t, r.gap_ob) for r in rows],
    }


def write_plot_data(trace: Trace, out_dir, prefix="") -> list:
    out_dir = Path(out_dir)
    paths = []
    for name, series in plot_series(trace).items():
        path = out_dir / f"{prefix}{name}.dat"
        try:
            with path.open("w") as fh:
                fh.write(f"# t {name}\n")
                for t, v in series:
                    fh.write(f"{t!r} {v!r}\n")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        paths.append(path)
    return paths


def read_plot_data(path) -> list:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        t, v = line.split()
        out.append((float(t), float(v)))
    return out


def emit_outputs(trace: Trace, report, out_dir, prefix="") -> dict:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    return {
        "trace": write_trace_csv(trace, out_dir / f"{prefix}trace.csv"),
        "report": write_report_json(report, out_dir / f"{prefix}report.json"),
        "plots": write_plot_data(trace, out_dir, prefix),
    }
