"""End-to-end composition: index, join, detect, generate, formulate, resolve."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from .candidates import GenerationResult, generate
from .constraints import CleaningConfig, Role, schema_for
from .corrector import Repair, apply_repairs, resolve
from .dataset import Dataset
from .detection import DetectionResult, detect_errors
from .distance_matrix import DistanceMatrix, FrequencyTable, build_distance_matrix, index_for
from .formulators import FormulatorOutput, formulate

STAGES = ("index", "matrix", "detect", "generate", "formulate", "resolve")


@dataclass
class TargetResult:
    target: str
    matrix: DistanceMatrix
    freq: FrequencyTable
    detection: DetectionResult
    generation: GenerationResult
    outputs: dict  # CellRef -> FormulatorOutput
    repairs: list
    unrepaired: list


@dataclass
class PipelineResult:
    repaired: Dataset
    targets: dict = field(default_factory=dict)  # target column -> TargetResult
    timings_ms: dict = field(default_factory=lambda: {s: 0.0 for s in STAGES})

    @property
    def repairs(self) -> list[Repair]:
        return [r for t in self.targets.values() for r in t.repairs]


@contextmanager
def _timed(timings: dict, stage: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] += (time.perf_counter() - start) * 1000.0


def other_columns(dataset: Dataset, config: CleaningConfig) -> list[str]:
    return [c.name for c in schema_for(dataset.names, config) if c.role is Role.OTHER]


def run(
    dataset: Dataset,
    config: CleaningConfig,
    *,
    formulator: str | None = None,
    threads: int = 1,
    exact: bool = False,
    indexes: dict | None = None,
) -> PipelineResult:
    """Clean every constraint target of ``dataset``.

    ``indexes`` optionally maps a constraint position to a prebuilt index
    (for example a :class:`~spatialclean.spatial_index.DistanceTableIndex`).
    """
    encoding = formulator or config.formulator
    result = PipelineResult(repaired=dataset)
    timings = result.timings_ms
    others = other_columns(dataset, config)
    all_repairs: list[Repair] = []
    for target in config.targets:
        parts = []
        freq = None
        for i, constraint in enumerate(config.constraints):
            if constraint.target != target:
                continue
            with _timed(timings, "index"):
                index = (indexes or {}).get(i)
                if index is None:
                    index = index_for(dataset, constraint)
            with _timed(timings, "matrix"):
                m, freq = build_distance_matrix(dataset, constraint, index, threads)
            parts.append(m)
        matrix = DistanceMatrix.concat(parts)
        with _timed(timings, "detect"):
            detection = detect_errors(dataset, parts, target)
        with _timed(timings, "generate"):
            generation = generate(detection, matrix, freq, dataset, config, others, exact)
        with _timed(timings, "formulate"):
            outputs: dict[object, FormulatorOutput] = {}
            for ref, cc in generation.cells.items():
                if cc.candidates:
                    pos = dataset.position(ref.record_id)
                    pairs = matrix.pairs(pos, True) if exact else matrix.support(pos)
                    outputs[ref] = formulate(encoding, cc, pairs)
        with _timed(timings, "resolve"):
            repairs, unrepaired = resolve(generation.cells, outputs)
        all_repairs += repairs
        result.targets[target] = TargetResult(
            target, matrix, freq, detection, generation, outputs, repairs, unrepaired
        )
    with _timed(timings, "resolve"):
        result.repaired = apply_repairs(dataset, all_repairs)
    return result
