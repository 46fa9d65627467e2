"""Per-cell candidate scores in the input formats of three host cleaners.

``violation``: summed weight of the rows a candidate would violate (lower is better).
``probability``: share of neighbor weight supporting the candidate (higher is better).
``factor``: signed weighted factor sum, +W when satisfied and -W otherwise (higher is better).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .candidates import CellCandidates
from .detection import CellRef

LOWER_BETTER = "lower-better"
HIGHER_BETTER = "higher-better"
DIRECTIONS = {"violation": LOWER_BETTER, "probability": HIGHER_BETTER, "factor": HIGHER_BETTER}


@dataclass(frozen=True)
class FormulatorOutput:
    cell: CellRef
    encoding: str
    scores: tuple  # ((value, score), ...) in candidate order
    label: str | None = None

    @property
    def direction(self) -> str:
        return DIRECTIONS[self.encoding]

    def score_of(self, value):
        for v, s in self.scores:
            if v == value:
                return s
        raise KeyError(value)


def _sum(terms):
    # correctly rounded, so candidates tied in exact arithmetic stay tied
    terms = list(terms)
    if any(isinstance(t, Fraction) for t in terms):
        return sum(terms, Fraction(0))
    return math.fsum(terms)


def _non_null(rows) -> list[tuple[str, float]]:
    return [(v2, w) for v2, w in rows if v2 is not None]


def violation_vector(cc: CellCandidates, rows: Iterable[tuple[str | None, float]]) -> FormulatorOutput:
    """``rows`` are the cell's ``(v2, W)`` DistanceMatrix pairs."""
    rows = _non_null(rows)
    scores = tuple((c.value, _sum(w for v2, w in rows if v2 != c.value)) for c in cc.candidates)
    return FormulatorOutput(cc.cell, "violation", scores, cc.label)


def probability_vector(cc: CellCandidates) -> FormulatorOutput:
    support = sum(c.sum_weights for c in cc.candidates if c.supported)
    scores = tuple(
        (c.value, c.sum_weights / support if c.supported and support > 0 else 0.0)
        for c in cc.candidates
    )
    return FormulatorOutput(cc.cell, "probability", scores, cc.label)


def factor_sums(cc: CellCandidates, rows: Iterable[tuple[str | None, float]]) -> FormulatorOutput:
    rows = _non_null(rows)
    scores = tuple(
        (c.value, _sum(w if v2 == c.value else -w for v2, w in rows)) for c in cc.candidates
    )
    return FormulatorOutput(cc.cell, "factor", scores, cc.label)


def formulate(encoding: str, cc: CellCandidates, rows: Sequence[tuple[str | None, float]]) -> FormulatorOutput:
    if encoding == "violation":
        return violation_vector(cc, rows)
    if encoding == "probability":
        return probability_vector(cc)
    if encoding == "factor":
        return factor_sums(cc, rows)
    raise ValueError(f"unknown encoding {encoding!r}")


def _sig9(x) -> float:
    return float(f"{float(x):.9g}")


def dump_record(out: FormulatorOutput) -> dict:
    return {
        "record_id": out.cell.record_id,
        "attribute": out.cell.attribute,
        "encoding": out.encoding,
        "direction": out.direction,
        "scores": [{"value": v, "score": _sig9(s)} for v, s in out.scores],
        "label": out.label,
    }


def write_jsonl(outputs: Iterable[FormulatorOutput], dest) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for out in outputs:
            fh.write(json.dumps(dump_record(out)) + "\n")
