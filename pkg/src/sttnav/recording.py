"""Episode log serialization: replay JSONL and per-step/summary CSV.

Replay files carry only deterministic fields, so two runs of the same
scenario+seed produce byte-identical files. Wall-clock timing lives in
Metrics and bench reports instead.
"""

from __future__ import annotations

import csv
import json
from typing import Optional

import numpy as np

from .metrics import Metrics, compute_metrics
from .sim import EpisodeLog

SCHEMA_VERSION = 1


def _floats(arr) -> list:
    return [float(v) for v in np.asarray(arr).ravel()]


def _row_record(log: EpisodeLog, i: int, gaps: Optional[list]) -> dict:
    last = i == log.rows - 1
    rec = {
        "t": float(log.t[i]),
        "sigma": _floats(log.sigma[i]),
        "rho": float(log.rho[i]),
        "y": _floats(log.x[i, 0]),
        "x": [_floats(log.x[i, k]) for k in range(log.x.shape[1])],
        "u": None if last else _floats(log.u[i]),
        "e1": None if last else float(log.e1[i]),
        "d": None if not np.isfinite(log.d[i]) else float(log.d[i]),
        "min_gap": None if not np.isfinite(log.min_gap[i]) else float(log.min_gap[i]),
        "y_min_gap": None if not np.isfinite(log.y_min_gap[i]) else float(log.y_min_gap[i]),
        "substeps": int(log.substeps[i]) if not last else None,
    }
    if log.r is not None:
        rec["r"] = None if last else [_floats(log.r[i, k]) for k in range(log.r.shape[1])]
        rec["gamma"] = None if last else [_floats(log.gamma[i, k])
                                          for k in range(log.gamma.shape[1])]
    if gaps is not None:
        rec["gaps"] = gaps
    return rec


def _sensed_gaps(log: EpisodeLog, i: int, field) -> list:
    """Per-row sensed (id, gap) pairs, recomputed deterministically from the
    scripted motions, or from recorded positions when the run had live
    overrides."""
    sigma = log.sigma[i]
    if log.obstacle_centers is not None:
        centers = log.obstacle_centers[i]
        radii = log.obstacle_radii[i]
    else:
        centers, radii = field.table.eval(float(log.t[i]))
    diff = sigma - centers
    gaps = np.sqrt(np.einsum("ij,ij->i", diff, diff)) - radii
    out = []
    for j in range(len(gaps)):
        if gaps[j] <= field.sensing_radius:
            out.append([int(field.ids[j]), float(gaps[j])])
    return out


def write_jsonl(log: EpisodeLog, fh) -> None:
    dump = json.dumps
    header = {"type": "header", "schema": SCHEMA_VERSION, "scenario": log.scenario.raw}
    fh.write(dump(header, sort_keys=True, separators=(",", ":")) + "\n")
    field = log.scenario.build_field() if log.scenario.obstacles else None
    for i in range(log.rows):
        gaps = _sensed_gaps(log, i, field) if field is not None else []
        rec = {"type": "row", **_row_record(log, i, gaps)}
        fh.write(dump(rec, separators=(",", ":")) + "\n")
    footer = {"type": "end", "status": log.status,
              "events": [[int(t), k, _json_value(d)] for t, k, d in log.events],
              "commands": log.command_log}
    fh.write(dump(footer, separators=(",", ":")) + "\n")


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def read_jsonl(fh):
    """Returns (header, rows, footer) from a replay stream."""
    header = rows = footer = None
    rows = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if rec.get("type") == "header":
            header = rec
        elif rec.get("type") == "row":
            rows.append(rec)
        elif rec.get("type") == "end":
            footer = rec
    if header is None or footer is None:
        raise ValueError("not a replay log (missing header or footer)")
    return header, rows, footer


def jsonl_to_csv(rows: list, fh) -> None:
    """Flatten replay rows into a plot-ready CSV."""
    if not rows:
        raise ValueError("no rows to convert")
    n = len(rows[0]["sigma"])
    n_stages = len(rows[0]["x"])
    cols = ["t"]
    cols += [f"sigma_{i}" for i in range(n)]
    cols += ["rho"]
    cols += [f"y_{i}" for i in range(n)]
    for k in range(1, n_stages):
        cols += [f"x{k + 1}_{i}" for i in range(n)]
    cols += [f"u_{i}" for i in range(n)]
    cols += ["e1", "d", "min_gap", "y_min_gap"]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for rec in rows:
        row = [rec["t"], *rec["sigma"], rec["rho"], *rec["y"]]
        for k in range(1, n_stages):
            row += rec["x"][k]
        row += rec["u"] if rec["u"] is not None else [""] * n
        row += [rec["e1"] if rec["e1"] is not None else "",
                rec["d"] if rec["d"] is not None else "",
                rec["min_gap"] if rec["min_gap"] is not None else "",
                rec["y_min_gap"] if rec["y_min_gap"] is not None else ""]
        w.writerow(row)


def write_metrics_csv(metrics: Metrics, fh) -> None:
    d = metrics.as_dict()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(d))
    w.writerow([d[k] for k in d])


def metrics_for(log: EpisodeLog) -> Metrics:
    return compute_metrics(log)
