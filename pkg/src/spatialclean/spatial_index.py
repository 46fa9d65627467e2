"""Distance functions and a uniform-grid point index with range and kNN queries.

Coordinates are stored as ``(lat, lon)`` in degrees for ``haversine`` and as
``(y, x)`` in meters for ``planar``. Results are always ordered by
``(distance, record id)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .dataset import _natural_order

EARTH_RADIUS_M = 6_371_000.0

# Widening applied to grid search windows so that float rounding in the window
# arithmetic can never drop a point the exact distance test would accept.
_WINDOW_SLACK = 1e-9


class SpatialError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    """A location. In planar mode ``lat`` is y and ``lon`` is x, both in meters."""

    lat: float
    lon: float
    mode: str = "haversine"

    def __post_init__(self):
        if self.mode not in ("haversine", "planar"):
            raise SpatialError(f"unknown coordinate mode {self.mode!r}")
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise SpatialError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if self.mode == "haversine" and not (-90 <= self.lat <= 90 and -180 <= self.lon <= 180):
            raise SpatialError(f"coordinate out of range ({self.lat}, {self.lon})")

    @classmethod
    def planar(cls, x: float, y: float) -> "GeoPoint":
        return cls(lat=y, lon=x, mode="planar")


class Neighbor(NamedTuple):
    record_id: object
    distance: float


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters on a sphere of radius 6,371 km (vectorized)."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = np.radians(np.subtract(lat2, lat1))
    dlam = np.radians(np.subtract(lon2, lon1))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def planar(y1, x1, y2, x2):
    """Euclidean distance between ``(y, x)`` pairs (vectorized)."""
    return np.hypot(np.subtract(x2, x1), np.subtract(y2, y1))


_FUNCTIONS = {"haversine": haversine, "planar": planar}


def distance_function(name: str):
    try:
        return _FUNCTIONS[name]
    except KeyError:
        raise SpatialError(f"unknown distance function {name!r}") from None


def distance(p1: GeoPoint, p2: GeoPoint, fn: str | None = None) -> float:
    if p1.mode != p2.mode:
        raise SpatialError(f"mixed coordinate modes: {p1.mode} vs {p2.mode}")
    fn = fn or p1.mode
    if fn != p1.mode:
        raise SpatialError(f"distance {fn!r} does not match coordinate mode {p1.mode!r}")
    return float(_FUNCTIONS[fn](p1.lat, p1.lon, p2.lat, p2.lon))


def _position(index, record_id) -> int:
    lookup = index.__dict__.get("_pos")
    if lookup is None:
        lookup = index._pos = {rid: i for i, rid in enumerate(index.ids)}
    try:
        return lookup[record_id]
    except KeyError:
        raise SpatialError(f"unknown record id {record_id!r}") from None


class GridIndex:
    """Immutable uniform grid over the bounding box of the indexed points.

    Points are bucketed row-major, so a horizontal run of cells is one
    contiguous slice of ``order``.
    """

    def __init__(
        self,
        ids: Sequence,
        ys: np.ndarray,
        xs: np.ndarray,
        mode: str,
        min_cell_m: float | None = None,
    ):
        if len(ids) == 0:
            raise SpatialError("cannot index an empty point set")
        if mode not in _FUNCTIONS:
            raise SpatialError(f"unknown coordinate mode {mode!r}")
        self.ids = list(ids)
        self.mode = mode
        self.y = np.asarray(ys, dtype=np.float64)
        self.x = np.asarray(xs, dtype=np.float64)
        bad = ~(np.isfinite(self.y) & np.isfinite(self.x))
        if bad.any():
            raise SpatialError(f"non-finite coordinate for record {self.ids[int(np.argmax(bad))]!r}")
        self.rank = _natural_order(self.ids)
        self._dist = _FUNCTIONS[mode]

        n = len(self.ids)
        self.y0, self.x0 = float(self.y.min()), float(self.x.min())
        extent = max(float(self.y.max()) - self.y0, float(self.x.max()) - self.x0)
        side = extent / math.ceil(math.sqrt(n))
        if min_cell_m:
            floor = min_cell_m if mode == "planar" else math.degrees(min_cell_m / EARTH_RADIUS_M)
            side = max(side, floor)
        self.side = side if side > 0 else 1.0
        self.ny = int((float(self.y.max()) - self.y0) // self.side) + 1
        self.nx = int((float(self.x.max()) - self.x0) // self.side) + 1

        cy = np.minimum(((self.y - self.y0) // self.side).astype(np.int64), self.ny - 1)
        cx = np.minimum(((self.x - self.x0) // self.side).astype(np.int64), self.nx - 1)
        cell = cy * self.nx + cx
        self.order = np.argsort(cell, kind="stable")
        self.cell_start = np.searchsorted(cell[self.order], np.arange(self.ny * self.nx + 1))
        self._area = self._bbox_area()

    def __len__(self) -> int:
        return len(self.ids)

    def _bbox_area(self) -> float:
        h = float(self.y.max()) - self.y0
        w = float(self.x.max()) - self.x0
        if self.mode == "haversine":
            mid = math.radians(self.y0 + h / 2)
            h = math.radians(h) * EARTH_RADIUS_M
            w = math.radians(w) * EARTH_RADIUS_M * max(math.cos(mid), 1e-3)
        return max(h, 1.0) * max(w, 1.0)

    # -- windows -------------------------------------------------------------

    def _window(self, cy: float, cx: float, d: float):
        """Inclusive cell ranges (r0, r1, c0, c1) covering every point closer than ``d``."""
        full_cols = False
        if self.mode == "planar":
            hy = hx = d * (1 + _WINDOW_SLACK) + _WINDOW_SLACK
        else:
            theta = d / EARTH_RADIUS_M
            if theta >= math.pi:
                return 0, self.ny - 1, 0, self.nx - 1
            hy = math.degrees(theta) * (1 + _WINDOW_SLACK) + _WINDOW_SLACK
            top = min(90.0, max(abs(cy - hy), abs(cy + hy)))
            arg = math.sin(theta / 2) / math.cos(math.radians(top)) if top < 90.0 else 2.0
            if arg >= 1.0:
                full_cols = True
                hx = 0.0
            else:
                hx = math.degrees(2 * math.asin(arg)) * (1 + _WINDOW_SLACK) + _WINDOW_SLACK
                if cx - hx < -180.0 or cx + hx > 180.0:
                    full_cols = True  # window wraps the antimeridian
        r0 = max(0, int(math.floor((cy - hy - self.y0) / self.side)))
        r1 = min(self.ny - 1, int(math.floor((cy + hy - self.y0) / self.side)))
        if full_cols:
            c0, c1 = 0, self.nx - 1
        else:
            c0 = max(0, int(math.floor((cx - hx - self.x0) / self.side)))
            c1 = min(self.nx - 1, int(math.floor((cx + hx - self.x0) / self.side)))
        return r0, r1, c0, c1

    def _gather(self, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
        if r0 > r1 or c0 > c1:
            return np.empty(0, dtype=np.int64)
        starts = self.cell_start[np.arange(r0, r1 + 1) * self.nx + c0]
        stops = self.cell_start[np.arange(r0, r1 + 1) * self.nx + c1 + 1]
        parts = [self.order[a:b] for a, b in zip(starts, stops) if b > a]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def _sorted(self, idx: np.ndarray, dist: np.ndarray):
        key = np.lexsort((self.rank[idx], dist))
        return idx[key], dist[key]

    # -- queries on raw coordinates ------------------------------------------

    def range_positions(self, cy: float, cx: float, d: float, exclude: int | None = None):
        """Positions and distances of points strictly closer than ``d``, ordered."""
        if not d > 0:
            raise SpatialError(f"range d must be > 0, got {d}")
        idx = self._gather(*self._window(cy, cx, d))
        dist = self._dist(cy, cx, self.y[idx], self.x[idx])
        keep = dist < d
        if exclude is not None:
            keep &= idx != exclude
        return self._sorted(idx[keep], dist[keep])

    def knn_positions(self, cy: float, cx: float, k: int, exclude: int | None = None):
        """The ``k`` nearest positions (ties at the cut admit smaller ids first)."""
        if k < 1:
            raise SpatialError(f"k must be >= 1, got {k}")
        available = len(self.ids) - (1 if exclude is not None else 0)
        want = min(k, available)
        if want <= 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        radius = 1.5 * math.sqrt((want + 1) * self._area / (math.pi * len(self.ids)))
        while True:
            window = self._window(cy, cx, radius)
            if window == (0, self.ny - 1, 0, self.nx - 1):
                idx = np.arange(len(self.ids))
                if exclude is not None:
                    idx = idx[idx != exclude]
                dist = self._dist(cy, cx, self.y[idx], self.x[idx])
                idx, dist = self._sorted(idx, dist)
                return idx[:want], dist[:want]
            idx, dist = self.range_positions(cy, cx, radius, exclude)
            if len(idx) >= want:
                # every point at or below the want-th distance lies inside the radius
                return idx[:want], dist[:want]
            radius *= 2.0

    # -- queries used by the join --------------------------------------------

    def record_range(self, pos: int, d: float):
        return self.range_positions(self.y[pos], self.x[pos], d, exclude=pos)

    def record_knn(self, pos: int, k: int):
        return self.knn_positions(self.y[pos], self.x[pos], k, exclude=pos)

    def position_of(self, record_id) -> int:
        return _position(self, record_id)

    def _check_center(self, center: GeoPoint) -> None:
        if center.mode != self.mode:
            raise SpatialError(f"mixed coordinate modes: index {self.mode}, query {center.mode}")


class DistanceTableIndex:
    """Index over externally supplied pairwise distances.

    Pairs missing from the table are treated as infinitely far apart. Useful
    when distances come from a source other than coordinates (hand-built
    fixtures, precomputed network distances).
    """

    def __init__(self, ids: Sequence, distances: Mapping[tuple, float]):
        if len(ids) == 0:
            raise SpatialError("cannot index an empty point set")
        self.ids = list(ids)
        self.rank = _natural_order(self.ids)
        pos = {rid: i for i, rid in enumerate(self.ids)}
        n = len(self.ids)
        self._table = np.full((n, n), np.inf)
        np.fill_diagonal(self._table, 0.0)
        for (a, b), dist in distances.items():
            if not (math.isfinite(dist) and dist >= 0):
                raise SpatialError(f"invalid distance {dist!r} for pair ({a!r}, {b!r})")
            i, j = pos[a], pos[b]
            self._table[i, j] = self._table[j, i] = float(dist)

    def __len__(self) -> int:
        return len(self.ids)

    def _sorted(self, idx, dist):
        key = np.lexsort((self.rank[idx], dist))
        return idx[key], dist[key]

    def record_range(self, pos: int, d: float):
        if not d > 0:
            raise SpatialError(f"range d must be > 0, got {d}")
        row = self._table[pos]
        idx = np.flatnonzero(row < d)
        idx = idx[idx != pos]
        return self._sorted(idx, row[idx])

    def record_knn(self, pos: int, k: int):
        if k < 1:
            raise SpatialError(f"k must be >= 1, got {k}")
        row = self._table[pos]
        idx = np.flatnonzero(np.isfinite(row))
        idx = idx[idx != pos]
        idx, dist = self._sorted(idx, row[idx])
        return idx[:k], dist[:k]

    def position_of(self, record_id) -> int:
        return _position(self, record_id)


def build_index(points: Iterable[tuple[object, GeoPoint]], min_cell_m: float | None = None) -> GridIndex:
    """Grid index over ``(record_id, point)`` pairs; all points must share one mode."""
    points = list(points)
    if not points:
        raise SpatialError("cannot index an empty point set")
    modes = {p.mode for _, p in points}
    if len(modes) > 1:
        raise SpatialError(f"mixed coordinate modes: {sorted(modes)}")
    ids = [rid for rid, _ in points]
    ys = np.array([p.lat for _, p in points], dtype=np.float64)
    xs = np.array([p.lon for _, p in points], dtype=np.float64)
    return GridIndex(ids, ys, xs, modes.pop(), min_cell_m)


def _neighbors(index, idx, dist) -> list[Neighbor]:
    return [Neighbor(index.ids[i], float(dd)) for i, dd in zip(idx.tolist(), dist)]


def range_query(index, center, d: float, exclude_id=None) -> list[Neighbor]:
    """Records with ``distance(center, p) < d``, ordered by (distance, id).

    ``center`` is a :class:`GeoPoint`, or a record id for a
    :class:`DistanceTableIndex`.
    """
    if isinstance(index, DistanceTableIndex):
        pos = index.position_of(center)
        idx, dist = index.record_range(pos, d)
        if exclude_id is not None and exclude_id != center:
            keep = idx != index.position_of(exclude_id)
            idx, dist = idx[keep], dist[keep]
        return _neighbors(index, idx, dist)
    index._check_center(center)
    exclude = index.position_of(exclude_id) if exclude_id is not None else None
    return _neighbors(index, *index.range_positions(center.lat, center.lon, d, exclude))


def knn_query(index, center, k: int, exclude_id=None) -> list[Neighbor]:
    """The ``k`` nearest records (fewer if the index is smaller), ordered by (distance, id)."""
    if isinstance(index, DistanceTableIndex):
        return _neighbors(index, *index.record_knn(index.position_of(center), k))
    index._check_center(center)
    exclude = index.position_of(exclude_id) if exclude_id is not None else None
    return _neighbors(index, *index.knn_positions(center.lat, center.lon, k, exclude))
