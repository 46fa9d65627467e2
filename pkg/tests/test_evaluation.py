import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialclean.constraints import Range, SpatialConstraint
from spatialclean.dataset import Dataset, DatasetError, to_csv_text
from spatialclean.evaluation import (
    CHICAGO_BBOX,
    GroundTruth,
    baseline_exact_cooccurrence,
    evaluate,
    generate_synthetic,
)


def _hand_case():
    # 10 records, 4 errors (1-4); repairs on 1, 2, 3, 5, 6 of which 1, 2, 3 are right
    truth = GroundTruth([str(i) for i in range(1, 11)], ["T"] * 10, [i <= 4 for i in range(1, 11)], [False] * 10)
    original = ["E", "E", None, "E"] + ["T"] * 6
    repaired = ["T", "T", "T", "E", "X", "Y"] + ["T"] * 4
    mk = lambda vals: Dataset({"id": truth.ids, "t": vals})
    return mk(original), mk(repaired), truth


def test_hand_case_metrics():
    original, repaired, truth = _hand_case()
    m = evaluate(original, repaired, truth, "t")
    assert (m.n_errors, m.n_repairs, m.n_correct) == (4, 5, 3)
    assert m.precision == pytest.approx(0.6)
    assert m.recall == pytest.approx(0.75)
    assert m.f1 == pytest.approx(2 / 3)
    assert m.by_location["new"]["n_repairs"] == 5


def test_degenerate_metrics():
    original, _, truth = _hand_case()
    m = evaluate(original, original, truth, "t")
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    perfect = Dataset({"id": truth.ids, "t": truth.true_value})
    m = evaluate(original, perfect, truth, "t")
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_id_mismatch():
    original, repaired, truth = _hand_case()
    other = Dataset({"id": [str(i) for i in range(2, 12)], "t": ["T"] * 10})
    with pytest.raises(DatasetError):
        evaluate(original, other, truth, "t")


@given(st.integers(20, 400), st.integers(2, 30), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_generator_hits_requested_counts(n, regions, err_frac, dup, seed):
    n_err = int(err_frac * n * 0.5)
    data, truth, rm = generate_synthetic(n, regions, n_err, dup, seed=seed)
    assert len(data) == n and sum(truth.is_error) == n_err
    values = data.column("region")
    errors = [i for i in range(n) if truth.is_error[i]]
    assert all(values[i] != truth.true_value[i] for i in errors)
    assert all(values[i] == truth.true_value[i] for i in range(n) if not truth.is_error[i])
    lat, lon = data.coordinates("lat", lon_col="lon")
    coords = {}
    for i in range(n):
        coords.setdefault((lat[i], lon[i]), []).append(i)
    shared = [i for i in errors if len(coords[(lat[i], lon[i])]) > 1]
    # exactly round(dup * n_err) errors were moved onto clean records
    moved = int(np.floor(dup * n_err + 0.5))
    assert len(shared) == moved
    assert sum(1 for i in errors if truth.is_duplicate_location[i]) == moved
    codes = rm.label_of(lat, lon)
    assert [rm.labels[c] for c in codes] == truth.true_value
    assert len(set(rm.labels)) == regions


def test_zero_errors_and_full_duplication():
    data, truth, _ = generate_synthetic(200, 5, 0, 0.0, seed=1)
    assert data.column("region") == truth.true_value
    data, truth, _ = generate_synthetic(500, 5, 50, 1.0, seed=1)
    lat, lon = data.coordinates("lat", "lon")
    clean = {(lat[i], lon[i]) for i in range(500) if not truth.is_error[i]}
    assert all((lat[i], lon[i]) in clean for i in range(500) if truth.is_error[i])


def test_generation_is_deterministic():
    a = generate_synthetic(1000, 20, 100, 0.33, seed=4)
    b = generate_synthetic(1000, 20, 100, 0.33, seed=4)
    assert to_csv_text(a[0]) == to_csv_text(b[0])
    assert a[1] == b[1]
    assert to_csv_text(generate_synthetic(1000, 20, 100, 0.33, seed=5)[0]) != to_csv_text(a[0])
    lat, lon = a[0].coordinates("lat", "lon")
    assert CHICAGO_BBOX[0] <= lat.min() and lat.max() <= CHICAGO_BBOX[2]
    assert CHICAGO_BBOX[1] <= lon.min() and lon.max() <= CHICAGO_BBOX[3]


@pytest.mark.parametrize("kwargs", [
    dict(n_records=10, n_regions=3, n_errors=11, dup_ratio=0),
    dict(n_records=10, n_regions=1, n_errors=1, dup_ratio=0),
    dict(n_records=10, n_regions=3, n_errors=1, dup_ratio=1.5),
    dict(n_records=0, n_regions=3, n_errors=0, dup_ratio=0),
])
def test_generator_parameter_checks(kwargs):
    with pytest.raises(ValueError):
        generate_synthetic(**kwargs)


def test_truth_csv_round_trip(tmp_path):
    _, truth, _ = generate_synthetic(100, 4, 10, 0.5, seed=2)
    truth.write_csv(tmp_path / "t.csv")
    assert GroundTruth.read_csv(tmp_path / "t.csv") == truth


C = SpatialConstraint(Range(1), "t")


def test_baseline_uses_other_records_at_the_same_point():
    data = Dataset({
        "id": ["1", "2", "3", "4", "5", "6"],
        "lat": ["1", "1", "1", "2", "2", "3"],
        "lon": ["1", "1", "1", "2", "2", "3"],
        "t": ["a", "a", "b", "a", None, "c"],
    })
    out = baseline_exact_cooccurrence(data, C)
    assert out.column("t") == ["a", "a", "a", "a", "a", "c"]


def test_baseline_no_duplicates_no_repairs():
    data, truth, _ = generate_synthetic(2000, 10, 200, 0.0, seed=3)
    m = evaluate(data, baseline_exact_cooccurrence(data, SpatialConstraint(Range(1), "region")), truth, "region")
    assert m.n_repairs == 0 and m.f1 == 0.0


def test_baseline_recovers_duplicated_errors():
    data, truth, _ = generate_synthetic(2000, 10, 200, 1.0, seed=3, null_ratio=0.0)
    m = evaluate(data, baseline_exact_cooccurrence(data, SpatialConstraint(Range(1), "region")), truth, "region")
    assert m.by_location["duplicate"]["recall"] > 0.95


def test_baseline_single_record_unchanged():
    data = Dataset({"id": ["1"], "lat": ["0"], "lon": ["0"], "t": ["x"]})
    assert baseline_exact_cooccurrence(data, C).columns == data.columns
