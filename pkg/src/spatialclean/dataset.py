"""In-memory table under repair, with RFC-4180 CSV I/O.

Values are kept as the strings read from disk (``None`` for an empty field) so
that untouched cells are written back byte-for-byte.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class DatasetError(ValueError):
    pass


def _natural_order(ids: Sequence[str]) -> np.ndarray:
    """Rank of each id: numeric order if every id is an integer, else lexicographic."""
    try:
        keys = [int(i) for i in ids]
    except (TypeError, ValueError):
        keys = list(ids)
    order = sorted(range(len(ids)), key=keys.__getitem__)
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids))
    return rank


@dataclass
class Dataset:
    columns: dict[str, list]
    id_col: str = "id"
    _rank: np.ndarray | None = field(default=None, repr=False, compare=False)
    _index: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.id_col not in self.columns:
            raise DatasetError(f"record-id column {self.id_col!r} not found")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DatasetError("columns have different lengths")
        ids = self.columns[self.id_col]
        if any(i is None for i in ids):
            raise DatasetError("record id may not be empty")
        if len(set(ids)) != len(ids):
            raise DatasetError("record ids are not unique")

    def __len__(self) -> int:
        return len(self.columns[self.id_col])

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def ids(self) -> list[str]:
        return self.columns[self.id_col]

    @property
    def id_rank(self) -> np.ndarray:
        if self._rank is None:
            self._rank = _natural_order(self.ids)
        return self._rank

    def position(self, record_id) -> int:
        if self._index is None:
            self._index = {rid: i for i, rid in enumerate(self.ids)}
        try:
            return self._index[record_id]
        except KeyError:
            raise DatasetError(f"unknown record id {record_id!r}") from None

    def column(self, name: str) -> list:
        try:
            return self.columns[name]
        except KeyError:
            raise DatasetError(f"unknown column {name!r}") from None

    def coordinates(self, lat_col: str, lon_col: str) -> tuple[np.ndarray, np.ndarray]:
        """Both coordinate columns as float arrays; rejects missing or non-finite values."""
        out = []
        for name in (lat_col, lon_col):
            values = self.column(name)
            arr = np.empty(len(values), dtype=np.float64)
            for i, v in enumerate(values):
                try:
                    x = float(v)
                except (TypeError, ValueError):
                    x = math.nan
                if not math.isfinite(x):
                    raise DatasetError(
                        f"record {self.ids[i]!r}: non-finite coordinate {name}={v!r}"
                    )
                arr[i] = x
            out.append(arr)
        return out[0], out[1]

    def codes(self, name: str) -> tuple[np.ndarray, list[str]]:
        """Integer codes for a categorical column (``-1`` is NULL) and the sorted categories."""
        values = self.column(name)
        categories = sorted({v for v in values if v is not None})
        lookup = {v: i for i, v in enumerate(categories)}
        codes = np.fromiter(
            (lookup[v] if v is not None else -1 for v in values), dtype=np.int64, count=len(values)
        )
        return codes, categories

    def replace(self, name: str, updates: Mapping[int, object]) -> "Dataset":
        """Copy with ``column[name][pos] = value`` for each update."""
        cols = {k: list(v) if k == name else v for k, v in self.columns.items()}
        target = cols[name]
        for pos, value in updates.items():
            target[pos] = value
        return Dataset(cols, self.id_col)

    def copy(self) -> "Dataset":
        return Dataset({k: list(v) for k, v in self.columns.items()}, self.id_col)


def from_records(records: Iterable[Mapping], names: Sequence[str], id_col: str = "id") -> Dataset:
    cols: dict[str, list] = {n: [] for n in names}
    for rec in records:
        for n in names:
            v = rec.get(n)
            cols[n].append(None if v is None or v == "" else str(v))
    return Dataset(cols, id_col)


def read_csv(source, id_col: str = "id") -> Dataset:
    """Read a header-first UTF-8 CSV; empty fields become ``None``."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read(fh, id_col)
    return _read(source, id_col)


def _read(fh, id_col: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty CSV (no header)") from None
    if len(set(header)) != len(header):
        raise DatasetError("duplicate column names in header")
    cols: dict[str, list] = {h: [] for h in header}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DatasetError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        for h, v in zip(header, row):
            cols[h].append(v if v != "" else None)
    return Dataset(cols, id_col)


def write_csv(dataset: Dataset, dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            _write(dataset, fh)
    else:
        _write(dataset, dest)


def _write(dataset: Dataset, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(dataset.names)
    cols = [dataset.columns[n] for n in dataset.names]
    for row in zip(*cols):
        writer.writerow(["" if v is None else v for v in row])


def to_csv_text(dataset: Dataset) -> str:
    buf = io.StringIO()
    _write(dataset, buf)
    return buf.getvalue()
