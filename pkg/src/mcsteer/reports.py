"""Tab-separated report files.

One header row of column names, then one row per record.  Floats are
written with ``repr``, which is the shortest round-tripping decimal form,
so identical values always produce identical bytes and a reader recovers
them exactly.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError


def _format_cell(value) -> str:
    if isinstance(value, (bool, str)):
        text = str(value)
    elif isinstance(value, (int, np.integer)):
        text = str(int(value))
    elif isinstance(value, (float, np.floating)):
        text = repr(float(value))
    else:
        raise DataFormatError(f"cannot serialize {type(value).__name__} into a report cell")
    if "\t" in text or "\n" in text:
        raise DataFormatError(f"report cell {text!r} contains a delimiter")
    return text


def write_table(path: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = ["\t".join(columns)]
    width = len(columns)
    for row in rows:
        row = list(row)
        if len(row) != width:
            raise DataFormatError(f"row has {len(row)} cells, expected {width}")
        lines.append("\t".join(_format_cell(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        text = f.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataFormatError(f"{path}: empty report")
    columns = lines[0].split("\t")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(columns):
            raise DataFormatError(f"{path}: line {i} has {len(cells)} cells, "
                                  f"expected {len(columns)}")
        rows.append(cells)
    return columns, rows


TRAINLOG_COLUMNS = ["epoch", "train_mse", "val_mse"]


def write_trainlog(path: str, log) -> None:
    write_table(path, TRAINLOG_COLUMNS,
                [[e.epoch, e.train_mse, e.val_mse] for e in log.epochs])
