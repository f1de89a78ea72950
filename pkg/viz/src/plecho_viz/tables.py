"""Parser for the plecho tabular text format.

Deliberately independent of the simulator package: the file layout is the
contract. A file is a '# plecho-table v1' magic line, '# key: value' header
lines, one '# columns: ...' line, then whitespace-separated numeric rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "plecho-table v1"


class ParseError(ValueError):
    """Malformed input table; the message names the offending line."""


@dataclass
class Table:
    meta: dict
    columns: list
    data: np.ndarray
    path: str

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise ParseError(f"{self.path}: missing required column {name!r}") from None

    def has_column(self, name: str) -> bool:
        return name in self.columns

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise ParseError(f"{self.path}: missing required columns {missing}")


def read_table(path) -> Table:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ParseError(f"{path}: {err}") from None
    meta: dict = {}
    columns = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if lineno == 1:
                if body != MAGIC:
                    raise ParseError(f"{path}: line 1: not a {MAGIC} file")
                continue
            if ":" not in body:
                raise ParseError(f"{path}: line {lineno}: header without ':'")
            key, value = (part.strip() for part in body.split(":", 1))
            if key == "columns":
                columns = value.split()
            else:
                meta[key] = value
            continue
        if columns is None:
            raise ParseError(f"{path}: line {lineno}: data before the columns header")
        parts = line.split()
        if len(parts) != len(columns):
            raise ParseError(
                f"{path}: line {lineno}: expected {len(columns)} values, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
    if columns is None:
        raise ParseError(f"{path}: missing columns header")
    data = np.array(rows) if rows else np.empty((0, len(columns)))
    return Table(meta, columns, data, str(path))
