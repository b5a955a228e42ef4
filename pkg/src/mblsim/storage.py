"""Deterministic on-disk formats.

Time series are CSV with a single `time,observable,mean,sem` header; records
(manifests, fit reports) are newline-delimited JSON with sorted keys.  Floats
are always written with 17 significant digits, which round-trips IEEE double
exactly, so re-reading a file reproduces the in-memory arrays bit for bit and
rerunning a deterministic pipeline reproduces files byte for byte.

All writes go through a temp-file-then-rename so readers never observe a
partially written file.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .trajectory import SeriesStats, TimeSeriesRecord, TrajectoryConfig

CSV_HEADER = "time,observable,mean,sem"


def format_float(value: float) -> str:
    """17-significant-digit decimal form that parses back to the same double.

    Integral values keep a trailing .0 so JSON readers preserve the type."""
    value = float(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    text = "%.17g" % value
    if "." not in text and "e" not in text and "E" not in text:
        text += ".0"
    return text


def canonical_json(obj: Any) -> str:
    """JSON with sorted keys and format_float floats (json.dumps formats
    floats with shortest-repr, which the 17-digit file contract forbids)."""
    pieces: list[str] = []
    _write_json(obj, pieces)
    return "".join(pieces)


def _write_json(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, Mapping):
        out.append("{")
        for k, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            if k:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _write_json(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for k, item in enumerate(obj):
            if k:
                out.append(",")
            _write_json(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def timeseries_csv_text(record: TimeSeriesRecord) -> str:
    """Long-format CSV: observables in sorted order, times ascending within."""
    lines = [CSV_HEADER]
    for name in sorted(record.series):
        stats = record.series[name]
        if len(stats.mean) != len(record.times):
            raise ValueError(f"series {name!r} length mismatch")
        for t, mean, sem in zip(record.times, stats.mean, stats.sem):
            lines.append(
                f"{format_float(t)},{name},{format_float(mean)},{format_float(sem)}"
            )
    return "\n".join(lines) + "\n"


def write_timeseries_csv(path: str | Path, record: TimeSeriesRecord) -> None:
    atomic_write_text(path, timeseries_csv_text(record))


def read_timeseries_csv(
    path: str | Path,
    config: TrajectoryConfig | None = None,
    n_samples: int = 0,
    t0_steps: int | None = None,
) -> TimeSeriesRecord:
    """Rebuild a TimeSeriesRecord; metadata fields come from the caller (the
    manifest), the file carries only the numbers."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing {CSV_HEADER!r} header")
    times_by_name: dict[str, list[float]] = {}
    series_rows: dict[str, list[tuple[float, float]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields")
        t_text, name, mean_text, sem_text = parts
        times_by_name.setdefault(name, []).append(float(t_text))
        series_rows.setdefault(name, []).append((float(mean_text), float(sem_text)))
    if not series_rows:
        raise ValueError(f"{path}: no data rows")
    names = sorted(series_rows)
    times = np.asarray(times_by_name[names[0]])
    series: dict[str, SeriesStats] = {}
    for name in names:
        if times_by_name[name] != times_by_name[names[0]]:
            raise ValueError(f"{path}: observable {name!r} has a different time grid")
        rows = np.asarray(series_rows[name])
        series[name] = SeriesStats(mean=rows[:, 0].copy(), sem=rows[:, 1].copy())
    return TimeSeriesRecord(
        times=times,
        series=series,
        n_samples=n_samples,
        config=config,
        t0_steps=t0_steps,
    )


def jsonl_text(records: Iterable[Mapping[str, Any]]) -> str:
    return "".join(canonical_json(rec) + "\n" for rec in records)


def write_jsonl(path: str | Path, records: Sequence[Mapping[str, Any]]) -> None:
    atomic_write_text(path, jsonl_text(records))


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}:{lineno}: bad record: {err}") from err
    return records


def table_csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Plot-data tables: header row plus formatted cells (floats 17-digit)."""
    lines = [",".join(header)]
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValueError("row width does not match header")
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(format_float(float(cell)))
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
