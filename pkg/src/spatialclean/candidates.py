"""Weighted candidate generation, probability estimation and auto-labeling.

For an erroneous cell of record R and candidate value v::

    P(v) = |Spatial(v, R)| / |D|  *  prod_{A'} Count((v, R.A'), D) / Count(v, D)

where |Spatial(v, R)| is the summed DistanceMatrix weight of R's neighbors
holding v. For the record-identifier attribute the co-occurrence count is 1
for R's own value and the minimality pseudo-count otherwise.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constraints import CleaningConfig
from .dataset import Dataset
from .detection import CellRef, DetectionResult
from .distance_matrix import DistanceMatrix, FrequencyTable


@dataclass
class Candidate:
    value: str
    sum_weights: float | Fraction
    supported: bool = True  # False when the weight is the default for an unsupported original
    raw_prob: float | Fraction = 0.0
    norm_prob: float | Fraction = 0.0


@dataclass
class CellCandidates:
    cell: CellRef
    original_value: str | None
    candidates: list[Candidate]
    label: str | None = None
    top_prob: float | Fraction = 0.0
    pruned: list[Candidate] = field(default_factory=list)

    def values(self) -> list[str]:
        return [c.value for c in self.candidates]

    def get(self, value) -> Candidate | None:
        for c in self.candidates:
            if c.value == value:
                return c
        return None


def init_candidates(
    neighbors: Iterable[tuple[str | None, float]],
    original_value: str | None,
    default_min_weight=0.01,
) -> list[Candidate]:
    """Phase 1: sum neighbor weights per distinct non-NULL value.

    ``neighbors`` yields ``(v2, W)`` for the cell's DistanceMatrix rows. Values
    whose weights sum to zero (possible for the kNN cut-off neighbor) are not
    candidates; the original value always is, at ``default_min_weight`` when no
    neighbor supports it.
    """
    sums: dict = {}
    for value, w in neighbors:
        if value is not None:
            sums[value] = sums.get(value, 0) + w
    out = [Candidate(v, s) for v, s in sums.items() if s > 0]
    if original_value is not None and not (sums.get(original_value, 0) > 0):
        out.append(Candidate(original_value, default_min_weight, supported=False))
    out.sort(key=lambda c: (-c.sum_weights, c.value))
    return out


def cooccurrence_counts(dataset: Dataset, target_col: str, other_cols: Sequence[str]) -> Counter:
    """Count((v, a), D) keyed by ``(attribute, a, v)`` over non-NULL pairs."""
    target = dataset.column(target_col)
    counts: Counter = Counter()
    for attr in other_cols:
        for a, v in zip(dataset.column(attr), target):
            if a is not None and v is not None:
                counts[(attr, a, v)] += 1
    return counts


def prob_eval(
    value: str,
    sum_weights,
    freq: FrequencyTable,
    original_value: str | None,
    other_values: Mapping[str, str | None] | None = None,
    cooccurrence: Mapping | None = None,
    pseudocount=0.1,
    exact: bool = False,
):
    """Phase 2: unnormalized probability of ``value`` for one cell.

    ``other_values`` maps each non-identifier attribute in A' to the record's
    value; NULL attributes are skipped. ``exact`` switches to rational
    arithmetic (``sum_weights`` should then be a Fraction).
    """
    one = Fraction(1) if exact else 1.0
    pseudo = Fraction(repr(pseudocount)) if exact else pseudocount
    count_v = freq.count(value) or 1  # an original seen nowhere else still occurs once
    prob = sum_weights * one / freq.n_records
    prob *= (one if value == original_value else pseudo) / count_v
    for attr, a in (other_values or {}).items():
        if a is None:
            continue
        co = (cooccurrence or {}).get((attr, a, value), 0)
        prob *= (co * one if co else pseudo) / count_v
    return prob


def normalize_and_label(cands: list[Candidate], min_prob: float, max_prob: float):
    """Phase 3: normalize, drop candidates under ``min_prob``, decide a label.

    Returns ``(survivors, label, top_prob, pruned)``. ``top_prob`` is the top
    normalized probability before pruning. The top candidate is never pruned.
    A label is given when one candidate survives or ``top_prob > max_prob``,
    unless the top probability is shared by several candidates.
    """
    if not cands:
        return [], None, 0.0, []
    total = sum(c.raw_prob for c in cands)
    if not total > 0:
        raise ValueError("normalization needs at least one candidate with raw_prob > 0")
    for c in cands:
        c.norm_prob = c.raw_prob / total
    top = max(cands, key=lambda c: c.raw_prob)  # first of the tied, in candidate order
    tied = sum(1 for c in cands if c.raw_prob == top.raw_prob) > 1
    top_prob = top.norm_prob
    survivors = [c for c in cands if c is top or not c.norm_prob < min_prob]
    pruned = [c for c in cands if not (c is top or not c.norm_prob < min_prob)]
    kept = sum(c.raw_prob for c in survivors)
    for c in survivors:
        c.norm_prob = c.raw_prob / kept
    label = None
    if not tied and (len(survivors) == 1 or top_prob > max_prob):
        label = top.value
    return survivors, label, top_prob, pruned


@dataclass
class GenerationResult:
    cells: dict  # CellRef -> CellCandidates, record-id order
    clean: frozenset
    erroneous: frozenset
    labels: dict
    diagnostics: list

    def report(self) -> list[dict]:
        return [candidate_report(cc) for cc in self.cells.values()]


def _num(x):
    if isinstance(x, Fraction):
        return str(x)
    return float(x)


def candidate_report(cc: CellCandidates) -> dict:
    def entry(c: Candidate, status: str):
        return {
            "value": c.value,
            "sum_weights": _num(c.sum_weights),
            "raw_prob": _num(c.raw_prob),
            "norm_prob": float(c.norm_prob),
            "status": status,
        }
    return {
        "record_id": cc.cell.record_id,
        "attribute": cc.cell.attribute,
        "original_value": cc.original_value,
        "candidates": [entry(c, "kept") for c in cc.candidates]
        + [entry(c, "pruned") for c in cc.pruned],
        "top_prob": float(cc.top_prob),
        "label": cc.label,
    }


def generate(
    detection: DetectionResult,
    matrix: DistanceMatrix,
    freq: FrequencyTable,
    dataset: Dataset,
    config: CleaningConfig,
    other_cols: Sequence[str] = (),
    exact: bool = False,
) -> GenerationResult:
    """Run the three phases for every erroneous cell of ``matrix.target``.

    Labeled cells move to the clean set. Cells with no candidate at all (a
    NULL original with no non-NULL neighbor) stay erroneous and are reported in
    ``diagnostics``; the batch never aborts.
    """
    target = matrix.target
    values = dataset.column(target)
    cooc = cooccurrence_counts(dataset, target, other_cols) if other_cols else None
    default_w = Fraction(repr(config.default_min_weight)) if exact else config.default_min_weight

    cells: dict = {}
    labels: dict = {}
    diagnostics: list[str] = []
    for pos in detection.positions:
        ref = CellRef(dataset.ids[pos], target)
        if ref not in detection.erroneous:
            continue
        original = values[pos]
        pairs = matrix.pairs(pos, True) if exact else matrix.support(pos)
        cands = init_candidates(pairs, original, default_w)
        if not cands:
            cells[ref] = CellCandidates(ref, original, [])
            diagnostics.append(f"record {ref.record_id!r}: no candidates for {target!r}")
            continue
        others = {a: dataset.columns[a][pos] for a in other_cols}
        for c in cands:
            c.raw_prob = prob_eval(
                c.value, c.sum_weights, freq, original, others, cooc,
                config.minimality_pseudocount, exact,
            )
        survivors, label, top_prob, pruned = normalize_and_label(
            cands, config.min_prob, config.max_prob
        )
        cells[ref] = CellCandidates(ref, original, survivors, label, top_prob, pruned)
        if label is not None:
            labels[ref] = label

    labeled = frozenset(labels)
    return GenerationResult(
        cells=cells,
        clean=detection.clean | labeled,
        erroneous=detection.erroneous - labeled,
        labels=labels,
        diagnostics=diagnostics,
    )


def write_report(result: GenerationResult, dest) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(result.report(), fh, indent=2)
        fh.write("\n")
