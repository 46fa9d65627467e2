"""The spatial self-join table ``(R1, R2, v1, v2, D, W)`` and value frequencies."""
from __future__ import annotations

import csv
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .constraints import KNN, Range, SpatialConstraint
from .dataset import Dataset
from .spatial_index import GridIndex


class DistanceMatrixRow(NamedTuple):
    R1: object
    R2: object
    v1: str | None
    v2: str | None
    D: float
    W: float


def _exponent(n):
    # keep integral exponents integral so Fraction arithmetic stays exact
    if isinstance(n, float) and n.is_integer():
        return int(n)
    return n


def weight(D, d_eff, n):
    """``(1 - D / d_eff) ** n``; works for floats and :class:`~fractions.Fraction`."""
    if D < 0:
        raise ValueError(f"distance must be >= 0, got {D}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if D > d_eff:
        raise ValueError(f"distance {D} exceeds neighborhood radius {d_eff}")
    if d_eff == 0:
        return type(D)(1) if isinstance(D, Fraction) else 1.0
    return (1 - D / d_eff) ** _exponent(n)


def weights(D: np.ndarray, d_eff: np.ndarray, n: float) -> np.ndarray:
    """Vectorized :func:`weight`; a zero radius (all neighbors coincident) weighs 1."""
    D = np.asarray(D, dtype=np.float64)
    d_eff = np.asarray(d_eff, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(d_eff > 0, 1.0 - D / np.where(d_eff > 0, d_eff, 1.0), 1.0)
    return np.power(np.clip(base, 0.0, 1.0), float(n))


@dataclass(frozen=True)
class FrequencyTable:
    counts: dict
    n_records: int

    def count(self, value) -> int:
        return self.counts.get(value, 0)

    def __len__(self) -> int:
        return len(self.counts)


def frequency(dataset: Dataset, target_col: str) -> FrequencyTable:
    """Count(v, D) for each non-NULL value of ``target_col``; |D| includes NULL rows."""
    values = dataset.column(target_col)
    counts = Counter(v for v in values if v is not None)
    return FrequencyTable(dict(sorted(counts.items())), len(values))


@dataclass
class DistanceMatrix:
    """Columnar, read-only DistanceMatrix for one target column.

    ``r1``/``r2`` are dataset positions; ``v1``/``v2`` index into
    ``categories`` with ``-1`` for NULL. Rows are sorted by (R1, D, R2) in
    record-id order, so each record's rows form one contiguous block.
    ``radius`` holds each record's neighborhood radius: d for range
    constraints, the k-th neighbor distance for kNN.
    """

    ids: list
    target: str
    categories: list
    rank: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    dist: np.ndarray
    w: np.ndarray
    radius: np.ndarray
    n: float = 2.0
    _lo: np.ndarray = field(init=False, repr=False)
    _hi: np.ndarray = field(init=False, repr=False)
    _support: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        key = self.rank[self.r1]
        self._lo = np.searchsorted(key, self.rank, side="left")
        self._hi = np.searchsorted(key, self.rank, side="right")

    def __len__(self) -> int:
        return len(self.r1)

    @property
    def d_eff(self) -> np.ndarray:
        return self.radius[self.r1]

    def block(self, pos: int) -> slice:
        """Row range whose R1 is the record at dataset position ``pos``."""
        return slice(int(self._lo[pos]), int(self._hi[pos]))

    def _value(self, code: int):
        return self.categories[code] if code >= 0 else None

    def _row(self, i: int) -> DistanceMatrixRow:
        return DistanceMatrixRow(
            self.ids[self.r1[i]], self.ids[self.r2[i]],
            self._value(int(self.v1[i])), self._value(int(self.v2[i])),
            float(self.dist[i]), float(self.w[i]),
        )

    def rows(self) -> Iterator[DistanceMatrixRow]:
        for i in range(len(self)):
            yield self._row(i)

    def rows_for(self, pos: int) -> list[DistanceMatrixRow]:
        s = self.block(pos)
        return [self._row(i) for i in range(s.start, s.stop)]

    def exact_weight(self, i: int) -> Fraction:
        """Row weight recomputed in rational arithmetic from D and the radius."""
        radius = Fraction(float(self.radius[self.r1[i]]))
        return weight(Fraction(float(self.dist[i])), radius, self.n)

    def pairs(self, pos: int, exact: bool = False) -> list[tuple]:
        """``(v2, W)`` for the record's rows, with NULL as ``None``."""
        s = self.block(pos)
        cats = self.categories
        v2 = self.v2[s].tolist()
        if exact:
            w = [self.exact_weight(i) for i in range(s.start, s.stop)]
        else:
            w = self.w[s].tolist()
        return [(cats[v] if v >= 0 else None, x) for v, x in zip(v2, w)]

    def _grouped(self):
        if self._support is None:
            n_pos, n_cat = len(self.ids), max(1, len(self.categories))
            valid = self.v2 >= 0
            key = self.r1[valid].astype(np.int64) * n_cat + self.v2[valid]
            w = self.w[valid]
            # bincount accumulates in row order, matching a sequential per-row sum
            if n_pos * n_cat <= 1 << 26:
                sums = np.bincount(key, weights=w, minlength=n_pos * n_cat)
                keys = np.flatnonzero(np.bincount(key, minlength=n_pos * n_cat))
                sums = sums[keys]
            else:
                keys, inverse = np.unique(key, return_inverse=True)
                sums = np.bincount(inverse, weights=w, minlength=len(keys))
            pos = keys // n_cat
            lo = np.searchsorted(pos, np.arange(n_pos), side="left")
            hi = np.searchsorted(pos, np.arange(n_pos), side="right")
            self._support = ((keys % n_cat).tolist(), sums.tolist(), lo, hi)
        return self._support

    def support(self, pos: int) -> list[tuple]:
        """``(value, summed W)`` per distinct non-NULL neighbor value of the record.

        Equivalent to summing :meth:`pairs` by value, in row order.
        """
        codes, sums, lo, hi = self._grouped()
        a, b = int(lo[pos]), int(hi[pos])
        cats = self.categories
        return [(cats[codes[i]], sums[i]) for i in range(a, b)]

    def to_csv(self, dest) -> None:
        """Debug dump: ``R1,R2,v1,v2,D,W`` with D to 3 and W to 6 decimals."""
        def write(fh):
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["R1", "R2", "v1", "v2", "D", "W"])
            for row in self.rows():
                out.writerow([
                    row.R1, row.R2,
                    "" if row.v1 is None else row.v1,
                    "" if row.v2 is None else row.v2,
                    f"{row.D:.3f}", f"{row.W:.6f}",
                ])
        if hasattr(dest, "write"):
            write(dest)
        else:
            with open(dest, "w", newline="", encoding="utf-8") as fh:
                write(fh)

    @classmethod
    def concat(cls, parts: Sequence["DistanceMatrix"]) -> "DistanceMatrix":
        """Stack matrices built for the same target (one per constraint)."""
        first = parts[0]
        if len(parts) == 1:
            return first
        if any(p.target != first.target or p.categories != first.categories for p in parts):
            raise ValueError("can only stack matrices over the same target column")
        cols = {name: np.concatenate([getattr(p, name) for p in parts])
                for name in ("r1", "r2", "v1", "v2", "dist", "w")}
        order = np.lexsort((first.rank[cols["r2"]], cols["dist"], first.rank[cols["r1"]]))
        cols = {k: v[order] for k, v in cols.items()}
        # radius is per constraint; a stacked matrix keeps the widest one
        radius = np.maximum.reduce([p.radius for p in parts])
        n = first.n if all(p.n == first.n for p in parts) else float("nan")
        return cls(first.ids, first.target, first.categories, first.rank,
                   radius=radius, n=n, **cols)


def index_for(dataset: Dataset, constraint: SpatialConstraint) -> GridIndex:
    lat, lon = dataset.coordinates(constraint.lat, constraint.lon)
    min_cell = None
    if isinstance(constraint.neighborhood, Range):
        min_cell = constraint.neighborhood.d / 4
    return GridIndex(dataset.ids, lat, lon, constraint.distance_fn, min_cell)


def _join_chunk(index, positions, hood):
    r1, r2, dist = [], [], []
    radius = np.zeros(len(positions))
    for j, pos in enumerate(positions.tolist()):
        if isinstance(hood, Range):
            idx, dd = index.record_range(pos, hood.d)
            radius[j] = hood.d
        else:
            idx, dd = index.record_knn(pos, hood.k)
            radius[j] = float(dd[-1]) if len(dd) else 0.0
        if len(idx):
            r1.append(np.full(len(idx), pos, dtype=np.int32))
            r2.append(idx.astype(np.int32))
            dist.append(dd)
    return r1, r2, dist, radius


def build_distance_matrix(
    dataset: Dataset,
    constraint: SpatialConstraint,
    index=None,
    threads: int = 1,
) -> tuple[DistanceMatrix, FrequencyTable]:
    """Materialize the range or kNN self-join for ``constraint``.

    ``index`` defaults to a grid over the dataset's coordinates; any object with
    ``record_range``/``record_knn`` over dataset positions is accepted. Records
    are joined in record-id order and each neighbor list arrives sorted by
    (D, R2), so the rows come out sorted for every ``threads`` value.
    """
    if index is None:
        index = index_for(dataset, constraint)
    if len(index) != len(dataset):
        raise ValueError("index does not cover the dataset")
    codes, categories = dataset.codes(constraint.target)
    codes = codes.astype(np.int32)
    hood = constraint.neighborhood
    rank = dataset.id_rank
    positions = np.argsort(rank, kind="stable")
    if threads > 1:
        chunks = np.array_split(positions, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _join_chunk(index, c, hood), chunks))
    else:
        chunks = [positions]
        results = [_join_chunk(index, positions, hood)]

    def stack(k, dtype):
        arrays = [a for res in results for a in res[k]]
        return np.concatenate(arrays) if arrays else np.empty(0, dtype=dtype)

    r1, r2, dist = stack(0, np.int32), stack(1, np.int32), stack(2, np.float64)
    radius = np.zeros(len(dataset))
    for chunk, res in zip(chunks, results):
        radius[chunk] = res[3]
    matrix = DistanceMatrix(
        ids=dataset.ids,
        target=constraint.target,
        categories=categories,
        rank=rank,
        r1=r1,
        r2=r2,
        v1=codes[r1],
        v2=codes[r2],
        dist=dist,
        w=weights(dist, radius[r1], constraint.n),
        radius=radius,
        n=constraint.n,
    )
    return matrix, frequency(dataset, constraint.target)
