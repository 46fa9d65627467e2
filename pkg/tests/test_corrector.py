import csv

import pytest

from spatialclean import pipeline
from spatialclean.candidates import Candidate, CellCandidates
from spatialclean.corrector import Repair, apply_repairs, best_value, resolve, write_log
from spatialclean.dataset import Dataset, DatasetError
from spatialclean.detection import CellRef
from spatialclean.formulators import FormulatorOutput


def test_worked_example_repairs(worked_example):
    result = pipeline.run(worked_example.dataset, worked_example.config,
                          indexes={0: worked_example.index})
    repairs = {r.cell.record_id: r for r in result.repairs}
    assert repairs["r1"].new_value == "Manhattan"
    assert repairs["r1"].source == "formulator-argmax"
    assert repairs["r1"].score == pytest.approx(0.77)
    assert (repairs["r5"].new_value, repairs["r5"].source) == ("Queens", "auto-label")
    repaired = result.repaired
    assert repaired.column("Borough")[repaired.position("r1")] == "Manhattan"
    for name in ("id", "y", "x"):
        assert repaired.column(name) == worked_example.dataset.column(name)


def _out(scores, encoding="factor"):
    return FormulatorOutput(CellRef("1", "t"), encoding, tuple(scores))


def test_ties_prefer_original_then_smallest():
    assert best_value(_out([("b", 1.0), ("a", 1.0)]), "b") == ("b", 1.0)
    assert best_value(_out([("c", 1.0), ("b", 1.0), ("a", 0.5)]), "a") == ("b", 1.0)
    assert best_value(_out([("a", 0.3), ("b", 0.1)], "violation"), "a") == ("b", 0.1)


def test_resolve_reports_empty_and_requires_outputs():
    ref = CellRef("1", "t")
    empty = CellCandidates(ref, None, [])
    repairs, unrepaired = resolve({ref: empty}, {})
    assert repairs == [] and unrepaired == [ref]
    cc = CellCandidates(ref, "a", [Candidate("a", 1.0), Candidate("b", 0.5)])
    with pytest.raises(KeyError):
        resolve({ref: cc}, {})
    repairs, _ = resolve({ref: cc}, {ref: _out([("a", 0.5), ("b", 0.5)])})
    assert repairs == [Repair(ref, "a", "a", "formulator-argmax", 0.5)]


def test_apply_repairs_copy_idempotent_and_guarded():
    data = Dataset({"id": ["1", "2"], "lat": ["0", "1"], "lon": ["0", "1"], "t": [None, "x"]})
    fill = [Repair(CellRef("1", "t"), None, "BROOKLYN", "formulator-argmax", 1.0)]
    once = apply_repairs(data, fill)
    assert once.column("t") == ["BROOKLYN", "x"]
    assert data.column("t") == [None, "x"]
    assert apply_repairs(once, fill).columns == once.columns
    assert apply_repairs(data, []).columns == data.columns
    with pytest.raises(DatasetError):
        apply_repairs(data, [Repair(CellRef("9", "t"), None, "x", "auto-label", 1.0)])
    with pytest.raises(ValueError):
        apply_repairs(data, [Repair(CellRef("1", "id"), "1", "7", "auto-label", 1.0)])


def test_chosen_value_is_extremal(worked_example):
    result = pipeline.run(worked_example.dataset, worked_example.config,
                          indexes={0: worked_example.index}).targets["Borough"]
    for r in result.repairs:
        if r.source == "formulator-argmax":
            scores = [s for _, s in result.outputs[r.cell].scores]
            assert r.score == max(scores)


def test_repair_log(tmp_path):
    write_log([Repair(CellRef("1", "t"), None, "x", "auto-label", 0.96491228)], tmp_path / "r.csv")
    with open(tmp_path / "r.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["record_id", "attribute", "old_value", "new_value", "source", "score"],
                    ["1", "t", "", "x", "auto-label", "0.96491228"]]
