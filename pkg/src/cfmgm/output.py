"""CSV and manifest serialization for experiment outputs."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable

from .harness import AggregateStats, RawRow

RAW_COLUMNS = ("trial", "scheme", "sweep_param", "sweep_value", "mmf_rate_bps", "decision_time_s")
AGGREGATE_COLUMNS = (
    "scheme", "sweep_param", "sweep_value", "mean_rate", "stderr", "ci95_lo", "ci95_hi", "n_trials", "n_excluded",
)


def fmt_float(x: float | None) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _csv_text(header: Iterable[str], rows: Iterable[Iterable[str]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def write_raw(path: Path, rows: Iterable[RawRow]) -> None:
    atomic_write(Path(path), _csv_text(RAW_COLUMNS, (
        (str(r.trial), r.scheme, r.sweep_param, fmt_float(r.sweep_value), fmt_float(r.mmf_rate_bps),
         fmt_float(r.decision_time_s))
        for r in rows
    )))


def write_aggregate(path: Path, rows: Iterable[AggregateStats]) -> None:
    atomic_write(Path(path), _csv_text(AGGREGATE_COLUMNS, (
        (r.scheme, r.sweep_param, fmt_float(r.sweep_value), fmt_float(r.mean_rate), fmt_float(r.stderr),
         fmt_float(r.ci95_lo), fmt_float(r.ci95_hi), str(r.n_trials), str(r.n_excluded))
        for r in rows
    )))


def read_raw(path: Path) -> list[RawRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, RAW_COLUMNS, path)
        return [
            RawRow(int(r["trial"]), r["scheme"], r["sweep_param"], float(r["sweep_value"]),
                   float(r["mmf_rate_bps"]), parse_float(r["decision_time_s"]))
            for r in reader
        ]


def read_aggregate(path: Path) -> list[AggregateStats]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, AGGREGATE_COLUMNS, path)
        return [
            AggregateStats(r["scheme"], r["sweep_param"], float(r["sweep_value"]), float(r["mean_rate"]),
                           float(r["stderr"]), float(r["ci95_lo"]), float(r["ci95_hi"]), int(r["n_trials"]),
                           int(r["n_excluded"]))
            for r in reader
        ]


def _check_header(found, expected, path):
    if tuple(found or ()) != expected:
        raise ValueError(f"{path}: expected columns {expected}, found {found}")


def write_json(path: Path, payload: dict) -> None:
    atomic_write(Path(path), json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_timing(path: Path, rows: Iterable[tuple[str, str, float, float, int]]) -> None:
    atomic_write(Path(path), _csv_text(
        ("scheme", "sweep_param", "sweep_value", "mean_decision_time_s", "n_trials"),
        ((s, p, fmt_float(v), fmt_float(t), str(n)) for s, p, v, t, n in rows),
    ))


def same_float(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b
