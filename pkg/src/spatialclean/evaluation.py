"""Synthetic region-labeled data, error injection, and precision/recall/F1 scoring."""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .constraints import SpatialConstraint
from .dataset import Dataset, DatasetError
from .spatial_index import haversine

# (min_lat, min_lon, max_lat, max_lon)
CHICAGO_BBOX = (41.644, -87.940, 42.023, -87.524)


@dataclass(frozen=True)
class RegionMap:
    """Voronoi partition of a bounding box by labeled seed points."""

    seed_lat: np.ndarray
    seed_lon: np.ndarray
    labels: tuple
    bbox: tuple

    def label_of(self, lat, lon) -> np.ndarray:
        lat = np.atleast_1d(np.asarray(lat, dtype=np.float64))
        lon = np.atleast_1d(np.asarray(lon, dtype=np.float64))
        out = np.empty(len(lat), dtype=np.int64)
        step = max(1, 4_000_000 // max(1, len(self.labels)))
        for a in range(0, len(lat), step):
            d = haversine(lat[a:a + step, None], lon[a:a + step, None], self.seed_lat, self.seed_lon)
            out[a:a + step] = np.argmin(d, axis=1)
        return out


@dataclass
class GroundTruth:
    ids: list
    true_value: list
    is_error: list
    is_duplicate_location: list

    def write_csv(self, dest) -> None:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["id", "true_value", "is_error", "is_duplicate_location"])
            for row in zip(self.ids, self.true_value, self.is_error, self.is_duplicate_location):
                out.writerow([row[0], row[1], int(row[2]), int(row[3])])

    @classmethod
    def read_csv(cls, src) -> "GroundTruth":
        ids, vals, err, dup = [], [], [], []
        with open(src, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                ids.append(rec["id"])
                vals.append(rec["true_value"] or None)
                err.append(rec["is_error"] == "1")
                dup.append(rec["is_duplicate_location"] == "1")
        return cls(ids, vals, err, dup)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_synthetic(
    n_records: int,
    n_regions: int,
    n_errors: int,
    dup_ratio: float,
    bbox: Sequence[float] = CHICAGO_BBOX,
    seed: int = 0,
    null_ratio: float = 0.1,
    target: str = "region",
) -> tuple[Dataset, GroundTruth, RegionMap]:
    """Uniform points labeled by their nearest region seed, with injected errors.

    ``round(dup_ratio * n_errors)`` of the corrupted records are moved onto the
    coordinates of distinct clean records (their true label follows the new
    location). Each error is NULL with probability ``null_ratio``, otherwise a
    uniformly drawn wrong label.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    if not 0 <= n_errors <= n_records:
        raise ValueError(f"n_errors must lie in [0, n_records], got {n_errors}")
    if not 0.0 <= dup_ratio <= 1.0:
        raise ValueError(f"dup_ratio must lie in [0, 1], got {dup_ratio}")
    if n_regions < 2:
        raise ValueError("n_regions must be >= 2")
    if not 0.0 <= null_ratio <= 1.0:
        raise ValueError("null_ratio must lie in [0, 1]")
    min_lat, min_lon, max_lat, max_lon = bbox
    if not (min_lat < max_lat and min_lon < max_lon):
        raise ValueError("empty bounding box")

    rng = np.random.default_rng(seed)
    width = len(str(n_regions - 1))
    labels = tuple(f"R{i:0{width}d}" for i in range(n_regions))
    regions = RegionMap(
        rng.uniform(min_lat, max_lat, n_regions),
        rng.uniform(min_lon, max_lon, n_regions),
        labels,
        tuple(bbox),
    )
    lat = rng.uniform(min_lat, max_lat, n_records)
    lon = rng.uniform(min_lon, max_lon, n_records)

    errors = rng.choice(n_records, size=n_errors, replace=False)
    n_dup = _round_half_up(dup_ratio * n_errors)
    n_clean = n_records - n_errors
    if n_dup and n_clean == 0:
        raise ValueError("duplicate-location errors need at least one clean record")
    is_error = np.zeros(n_records, dtype=bool)
    is_error[errors] = True
    clean = np.flatnonzero(~is_error)
    sources = rng.choice(clean, size=n_dup, replace=n_dup > n_clean)
    moved = errors[:n_dup]
    lat[moved] = lat[sources]
    lon[moved] = lon[sources]

    truth_code = regions.label_of(lat, lon)
    observed = truth_code.astype(object)
    nulls = rng.random(n_errors) < null_ratio
    shift = rng.integers(0, n_regions - 1, size=n_errors)
    for e, is_null, s in zip(errors.tolist(), nulls.tolist(), shift.tolist()):
        true = int(truth_code[e])
        observed[e] = None if is_null else (s if s < true else s + 1)

    dup_flag = np.zeros(n_records, dtype=bool)
    dup_flag[moved] = True
    dup_flag[sources] = True

    ids = [str(i + 1) for i in range(n_records)]
    data = Dataset(
        {
            "id": ids,
            "lat": [repr(float(x)) for x in lat],
            "lon": [repr(float(x)) for x in lon],
            target: [labels[v] if v is not None else None for v in observed.tolist()],
        },
        "id",
    )
    truth = GroundTruth(
        ids,
        [labels[v] for v in truth_code.tolist()],
        is_error.tolist(),
        dup_flag.tolist(),
    )
    return data, truth, regions


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    n_errors: int
    n_repairs: int
    n_correct: int
    by_location: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _prf(n_errors: int, n_repairs: int, n_correct: int) -> tuple[float, float, float]:
    p = n_correct / n_repairs if n_repairs else 0.0
    r = n_correct / n_errors if n_errors else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def evaluate(original: Dataset, repaired: Dataset, truth: GroundTruth, target: str) -> Metrics:
    """Score repairs of ``target`` against ground truth.

    A repair is any cell whose value changed; it is correct when the new value
    equals the truth. Errors are cells whose original value differs from the
    truth. ``by_location`` splits the counts by the duplicate-location flag.
    """
    if not (original.ids == repaired.ids and list(truth.ids) == original.ids):
        if set(original.ids) != set(repaired.ids) or set(original.ids) != set(truth.ids):
            raise DatasetError("record ids differ between original, repaired and truth")
    pos = {rid: i for i, rid in enumerate(truth.ids)}
    rep_pos = {rid: i for i, rid in enumerate(repaired.ids)}
    before, after = original.column(target), repaired.column(target)
    counts = defaultdict(Counter)
    for i, rid in enumerate(original.ids):
        t = pos[rid]
        old, new, true = before[i], after[rep_pos[rid]], truth.true_value[t]
        group = "duplicate" if truth.is_duplicate_location[t] else "new"
        for key in ("all", group):
            c = counts[key]
            c["errors"] += old != true
            if new != old:
                c["repairs"] += 1
                c["correct"] += new == true
    def metrics(c):
        return _prf(c["errors"], c["repairs"], c["correct"])
    p, r, f = metrics(counts["all"])
    split = {}
    for group in ("duplicate", "new"):
        c = counts[group]
        gp, gr, gf = metrics(c)
        split[group] = {
            "precision": gp, "recall": gr, "f1": gf,
            "n_errors": c["errors"], "n_repairs": c["repairs"], "n_correct": c["correct"],
        }
    a = counts["all"]
    return Metrics(p, r, f, a["errors"], a["repairs"], a["correct"], split)


def baseline_exact_cooccurrence(dataset: Dataset, constraint: SpatialConstraint) -> Dataset:
    """Exact-coordinate co-occurrence cleaner used as the non-spatial baseline.

    Each record takes the strict majority value among the *other* records at
    identical coordinates; without co-located records or a strict majority it
    is left unchanged.
    """
    lat, lon = dataset.coordinates(constraint.lat, constraint.lon)
    values = dataset.column(constraint.target)
    groups: dict = defaultdict(list)
    for i, key in enumerate(zip(lat.tolist(), lon.tolist())):
        groups[key].append(i)
    updates = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        tally = Counter(values[i] for i in members if values[i] is not None)
        for i in members:
            others = tally.copy()
            if values[i] is not None:
                others[values[i]] -= 1
            ranked = [(n, v) for v, n in others.items() if n > 0]
            if not ranked:
                continue
            best = max(n for n, _ in ranked)
            winners = [v for n, v in ranked if n == best]
            if len(winners) == 1 and winners[0] != values[i]:
                updates[i] = winners[0]
    return dataset.replace(constraint.target, updates)
