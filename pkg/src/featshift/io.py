"""File formats: strict CSV matrices, JSON/JSONL records, atomic writes.

CSV dialect is fixed: comma separator, '.' decimal point, UTF-8, header row
required. Data cells must be finite decimal floats; a missing or non-numeric
cell rejects the file with its row index and column name. All writers go
through a temp-file-plus-rename so partially written outputs never appear
under the final name.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile

import numpy as np

from .errors import InvalidDataError


def atomic_write_text(path: str, text: str) -> None:
    """Write UTF-8 text atomically (temp file + os.replace)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv_matrix(path: str) -> tuple[list[str], np.ndarray]:
    """Read a header + float matrix CSV.

    Returns (column names, (n, d) array). Ragged rows, empty cells and
    non-numeric cells raise invalid-data errors naming the 1-based data row
    and the offending column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidDataError(f"{path}: empty file, expected a header row") from None
        if not header or any(not c.strip() for c in header):
            raise InvalidDataError(f"{path}: blank column name in header")
        d = len(header)
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != d:
                raise InvalidDataError(
                    f"{path}: row {i} has {len(row)} cells, header has {d} columns"
                )
            parsed = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if not cell:
                    raise InvalidDataError(f"{path}: missing value at row {i}, column {name!r}")
                try:
                    value = float(cell)
                except ValueError:
                    raise InvalidDataError(
                        f"{path}: non-numeric value {cell!r} at row {i}, column {name!r}"
                    ) from None
                if not math.isfinite(value):
                    raise InvalidDataError(
                        f"{path}: non-finite value {cell!r} at row {i}, column {name!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise InvalidDataError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def _format_cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv_matrix(path: str, header: list[str], data: np.ndarray) -> None:
    """Write a float matrix with header, atomically. Floats use shortest
    round-trip repr so rereading reproduces them bit for bit."""
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InvalidDataError(f"data shape {data.shape} does not match {len(header)} columns")
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in data:
        writer.writerow([_format_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def write_csv_rows(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    """One-record-per-row CSV (experiment cell summaries)."""
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _format_cell(v) if isinstance(v, float) else v for k, v in row.items()})
    atomic_write_text(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: str, payload) -> None:
    atomic_write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_jsonl(path: str, records) -> None:
    lines = [json.dumps(_jsonable(r), sort_keys=True) for r in records]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: str) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
