"""Plain CSV tables: LF line endings, UTF-8, floats in shortest round-trip form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.rows = [tuple(r) for r in self.rows]
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row {r!r} has {len(r)} cells, expected {len(self.columns)}")

    @classmethod
    def from_dicts(cls, rows: list[dict], columns=None) -> "Table":
        if columns is None:
            if not rows:
                raise ValueError("cannot infer columns from no rows")
            columns = list(rows[0])
        return cls(tuple(columns), [tuple(r.get(c) for c in columns) for r in rows])

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def __len__(self):
        return len(self.rows)


def _cell(value, digits: int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if digits is None:
            return repr(x)
        return f"{x:.{digits}g}"
    return str(value)


def emit_csv(table: Table, digits: int | None = None) -> bytes:
    """Serialize ``table``; ``digits`` switches floats to that many significant digits."""
    if not table.columns:
        raise ValueError("table has no columns")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(v, digits) for v in row])
    return buf.getvalue().encode("utf-8")


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_csv(data: bytes | str) -> Table:
    """Inverse of :func:`emit_csv` (ints, floats and strings are recovered by shape)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty CSV") from None
    return Table(tuple(header), [tuple(_parse_cell(c) for c in row) for row in reader])
