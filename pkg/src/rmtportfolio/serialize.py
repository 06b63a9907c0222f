"""Locale-independent CSV/JSON reading and writing.

Floats are written with 17 significant digits so every value survives a
text round trip bit-for-bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from rmtportfolio.exceptions import InputError

__all__ = [
    "CURVE_HEADER",
    "CsvError",
    "dumps_json",
    "format_float",
    "read_returns_csv",
    "write_curves",
    "write_rows",
]

CURVE_HEADER = ("N", "method", "stat", "relative_error_pct", "trials_used", "trials_flagged")
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


class CsvError(InputError):
    pass


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _json_value(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        # non-finite values have no JSON literal
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_value(str(k), indent, level + 1)}: {_json_value(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _json_value(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats; NaN and inf become null."""
    return _json_value(obj, indent, 0) + "\n"


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row[h]) for h in header])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_curves(path: str | Path, rows: Iterable[dict]) -> None:
    """CurveFile: rows ordered by (N, method); stat order is kept within a pair."""
    rows = sorted(rows, key=lambda r: (r["N"], r["method"]))
    write_rows(path, CURVE_HEADER, rows)


def read_returns_csv(path: str | Path) -> tuple[list[str], NDArray[np.float64]]:
    """Read a time x assets table with a header row of asset identifiers.

    Returns ``(asset_ids, Y)`` with ``Y`` oriented assets x time. Accepts LF
    and CRLF line endings; rejects anything but plain decimal numbers.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = [(reader.line_num, r) for r in reader if r]
    except OSError as exc:
        raise CsvError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise CsvError(f"{path}: not valid UTF-8") from exc
    if not rows:
        raise CsvError(f"{path}: empty file")
    header = [h.strip() for h in rows[0][1]]
    M = len(header)
    if M == 0 or any(not h for h in header):
        raise CsvError(f"{path}: header row must name every asset column")
    data = np.empty((len(rows) - 1, M))
    for i, (line, row) in enumerate(rows[1:]):
        if len(row) != M:
            raise CsvError(f"{path}: row {line} has {len(row)} columns, expected {M}")
        for j, cell in enumerate(row):
            text = cell.strip()
            if not _NUMBER.fullmatch(text):
                raise CsvError(
                    f"{path}: row {line}, column {j + 1} ({header[j]}): not a number: {cell!r}"
                )
            data[i, j] = float(text)
    if data.shape[0] < 2:
        raise CsvError(f"{path}: need at least 2 data rows, got {data.shape[0]}")
    return header, data.T.copy()
