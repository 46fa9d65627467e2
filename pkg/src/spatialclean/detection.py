"""Single-scan violation detection over a DistanceMatrix."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .dataset import Dataset
from .distance_matrix import DistanceMatrix


class CellRef(NamedTuple):
    record_id: object
    attribute: str


@dataclass(frozen=True)
class DetectionResult:
    erroneous: frozenset
    clean: frozenset
    # dataset positions of the erroneous cells, in record-id order
    positions: tuple = ()

    def sorted_erroneous(self, dataset: Dataset) -> list[CellRef]:
        return sorted(self.erroneous, key=lambda c: dataset.id_rank[dataset.position(c.record_id)])

    def report(self, dataset: Dataset) -> dict:
        return {
            "n_cells": len(self.erroneous) + len(self.clean),
            "n_erroneous": len(self.erroneous),
            "n_clean": len(self.clean),
            "erroneous": [
                {"record_id": c.record_id, "attribute": c.attribute}
                for c in self.sorted_erroneous(dataset)
            ],
        }


def _flagged(dataset: Dataset, matrix: DistanceMatrix, target_col: str) -> np.ndarray:
    codes, _ = dataset.codes(target_col)
    flagged = codes < 0  # a NULL cell is erroneous by definition
    conflict = (matrix.v1 >= 0) & (matrix.v2 >= 0) & (matrix.v1 != matrix.v2)
    flagged[matrix.r1[conflict]] = True
    flagged[matrix.r2[conflict]] = True
    return flagged


def detect_errors(
    dataset: Dataset,
    matrix: DistanceMatrix | Iterable[DistanceMatrix],
    target_col: str,
) -> DetectionResult:
    """Partition the ``target_col`` cells into erroneous and clean.

    Both endpoints of every row with two different non-NULL values are flagged.
    A NULL neighbor flags nobody; the NULL cell itself is always flagged.
    Several matrices (one per constraint) are OR-ed together.
    """
    matrices = [matrix] if isinstance(matrix, DistanceMatrix) else list(matrix)
    flagged = np.zeros(len(dataset), dtype=bool)
    if not matrices:
        codes, _ = dataset.codes(target_col)
        flagged = codes < 0
    for m in matrices:
        if m.target != target_col:
            raise ValueError(f"matrix built for {m.target!r}, not {target_col!r}")
        flagged |= _flagged(dataset, m, target_col)
    ids = dataset.ids
    rank = dataset.id_rank
    positions = np.flatnonzero(flagged)
    positions = positions[np.argsort(rank[positions], kind="stable")]
    erroneous = frozenset(CellRef(ids[i], target_col) for i in positions.tolist())
    clean = frozenset(CellRef(ids[i], target_col) for i in np.flatnonzero(~flagged).tolist())
    return DetectionResult(erroneous, clean, tuple(positions.tolist()))


def write_report(result: DetectionResult, dataset: Dataset, dest) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(result.report(dataset), fh, indent=2)
        fh.write("\n")
