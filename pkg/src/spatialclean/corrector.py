"""Deterministic repair resolution from formulator scores."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .candidates import CellCandidates
from .dataset import Dataset
from .detection import CellRef
from .formulators import LOWER_BETTER, FormulatorOutput


@dataclass(frozen=True)
class Repair:
    cell: CellRef
    old_value: str | None
    new_value: str
    source: str  # "auto-label" | "formulator-argmax"
    score: float


def best_value(out: FormulatorOutput, original) -> tuple[str, float]:
    """Extremal score for the output's direction; ties prefer ``original``, then the smallest value."""
    sign = -1.0 if out.direction == LOWER_BETTER else 1.0
    best = max(sign * s for _, s in out.scores)
    tied = [v for v, s in out.scores if sign * s == best]
    value = original if original in tied else min(tied)
    return value, sign * best


def resolve(
    cells: Mapping[CellRef, CellCandidates],
    outputs: Mapping[CellRef, FormulatorOutput],
) -> tuple[list[Repair], list[CellRef]]:
    """Pick a final value for every cell that has candidates.

    Returns the repairs and the cells left unrepaired (empty candidate lists).
    """
    repairs: list[Repair] = []
    unrepaired: list[CellRef] = []
    for ref, cc in cells.items():
        if not cc.candidates:
            unrepaired.append(ref)
            continue
        if cc.label is not None:
            repairs.append(Repair(ref, cc.original_value, cc.label, "auto-label", float(cc.top_prob)))
            continue
        if ref not in outputs:
            raise KeyError(f"missing formulator output for {ref}")
        value, score = best_value(outputs[ref], cc.original_value)
        repairs.append(Repair(ref, cc.original_value, value, "formulator-argmax", float(score)))
    return repairs, unrepaired


def apply_repairs(dataset: Dataset, repairs: Iterable[Repair]) -> Dataset:
    """Copy of ``dataset`` with repaired values; spatial and id columns are never written."""
    updates: dict[str, dict[int, str]] = {}
    for r in repairs:
        pos = dataset.position(r.cell.record_id)
        if r.cell.attribute == dataset.id_col:
            raise ValueError("refusing to repair the record-id column")
        updates.setdefault(r.cell.attribute, {})[pos] = r.new_value
    out = dataset.copy()
    for attr, changes in updates.items():
        column = out.column(attr)
        for pos, value in changes.items():
            column[pos] = value
    return out


def write_log(repairs: Sequence[Repair], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["record_id", "attribute", "old_value", "new_value", "source", "score"])
        for r in repairs:
            out.writerow([
                r.cell.record_id, r.cell.attribute,
                "" if r.old_value is None else r.old_value,
                r.new_value, r.source, f"{r.score:.9g}",
            ])
