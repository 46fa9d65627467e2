import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialclean.spatial_index import (
    EARTH_RADIUS_M,
    DistanceTableIndex,
    GeoPoint,
    GridIndex,
    SpatialError,
    build_index,
    distance,
    haversine,
    knn_query,
    range_query,
)


def mp_haversine(lat1, lon1, lat2, lon2):
    """50-digit reference great-circle distance."""
    mpmath.mp.dps = 50
    p1, p2 = mpmath.radians(lat1), mpmath.radians(lat2)
    dp, dl = mpmath.radians(lat2 - lat1), mpmath.radians(lon2 - lon1)
    a = mpmath.sin(dp / 2) ** 2 + mpmath.cos(p1) * mpmath.cos(p2) * mpmath.sin(dl / 2) ** 2
    return float(2 * EARTH_RADIUS_M * mpmath.asin(mpmath.sqrt(a)))


def brute_range(lat, lon, cy, cx, d, exclude=None):
    dist = haversine(cy, cx, lat, lon)
    idx = [i for i in range(len(lat)) if dist[i] < d and i != exclude]
    return sorted(idx, key=lambda i: (dist[i], i)), dist


def brute_knn(lat, lon, cy, cx, k, exclude=None):
    dist = haversine(cy, cx, lat, lon)
    idx = sorted((i for i in range(len(lat)) if i != exclude), key=lambda i: (dist[i], i))
    return idx[:k], dist


def test_one_degree_of_longitude_on_the_equator():
    d = distance(GeoPoint(0, 0), GeoPoint(0, 1))
    assert d == pytest.approx(111_194.9, abs=0.1)
    assert d == pytest.approx(mp_haversine(0, 0, 0, 1), rel=1e-12)


@given(
    st.floats(-89, 89), st.floats(-180, 180), st.floats(-89, 89), st.floats(-180, 180)
)
@settings(max_examples=200, deadline=None)
def test_haversine_matches_high_precision_reference(lat1, lon1, lat2, lon2):
    ref = mp_haversine(lat1, lon1, lat2, lon2)
    assert float(haversine(lat1, lon1, lat2, lon2)) == pytest.approx(ref, rel=1e-9, abs=1e-6)


def test_haversine_symmetry_and_identity():
    assert float(haversine(40.7, -74.0, 40.7, -74.0)) == 0.0
    assert float(haversine(40.7, -74.0, 41.8, -87.6)) == float(haversine(41.8, -87.6, 40.7, -74.0))


def test_range_query_identical_points_and_strict_boundary():
    pts = [("a", GeoPoint(0, 0)), ("b", GeoPoint(0, 0)), ("c", GeoPoint(0, 1))]
    index = build_index(pts)
    res = range_query(index, GeoPoint(0, 0), 1.0)
    assert [n.record_id for n in res] == ["a", "b"]
    assert all(n.distance == 0.0 for n in res)
    d_ac = distance(GeoPoint(0, 0), GeoPoint(0, 1))
    # D < d is strict: a point at exactly d is outside
    assert "c" not in [n.record_id for n in range_query(index, GeoPoint(0, 0), d_ac)]
    assert "c" in [n.record_id for n in range_query(index, GeoPoint(0, 0), d_ac * (1 + 1e-12))]


def test_knn_ties_admit_smaller_ids_first():
    pts = [(str(i), GeoPoint(0.0, 0.01 * (1 if i % 2 else -1))) for i in range(1, 7)]
    pts.append(("0", GeoPoint(0, 0)))
    index = build_index(pts)
    res = knn_query(index, GeoPoint(0, 0), 3, exclude_id="0")
    assert [n.record_id for n in res] == ["1", "2", "3"]


def test_knn_larger_than_dataset_returns_all():
    pts = [(str(i), GeoPoint(0.001 * i, 0)) for i in range(5)]
    res = knn_query(build_index(pts), GeoPoint(0, 0), 50)
    assert [n.record_id for n in res] == ["0", "1", "2", "3", "4"]


def test_query_validation():
    index = build_index([("a", GeoPoint(0, 0))])
    with pytest.raises(SpatialError):
        range_query(index, GeoPoint(0, 0), 0)
    with pytest.raises(SpatialError):
        knn_query(index, GeoPoint(0, 0), 0)
    with pytest.raises(SpatialError):
        range_query(index, GeoPoint.planar(0, 0), 10)
    with pytest.raises(SpatialError):
        build_index([("a", GeoPoint(0, 0)), ("b", GeoPoint.planar(0, 0))])
    with pytest.raises(SpatialError):
        build_index([])
    with pytest.raises(SpatialError):
        GeoPoint(float("nan"), 0)
    with pytest.raises(SpatialError):
        GeoPoint(91, 0)


def test_index_matches_brute_force_on_10k_points():
    rng = np.random.default_rng(11)
    n = 10_000
    lat = rng.uniform(41.6, 42.0, n)
    lon = rng.uniform(-87.9, -87.5, n)
    index = GridIndex([str(i) for i in range(n)], lat, lon, "haversine")
    for q in rng.choice(n, 40, replace=False).tolist():
        for d in (50.0, 400.0, 2500.0):
            idx, dist = index.record_range(q, d)
            expect, bd = brute_range(lat, lon, lat[q], lon[q], d, exclude=q)
            # ids are "0".."n-1", so numeric rank equals position
            assert idx.tolist() == expect
            assert np.array_equal(dist, bd[expect])
        for k in (1, 10, 60):
            idx, dist = index.record_knn(q, k)
            expect, bd = brute_knn(lat, lon, lat[q], lon[q], k, exclude=q)
            assert idx.tolist() == expect


@given(
    st.integers(1, 60),
    st.integers(0, 2**32 - 1),
    st.sampled_from([(-89.9, 89.9, -180, 180), (85, 90, -180, 180), (-10, 10, 170, 180), (0, 0.01, 0, 0.01)]),
    st.floats(1.0, 3.0e6),
    st.integers(1, 12),
)
@settings(max_examples=150, deadline=None)
def test_index_matches_brute_force_anywhere(n, seed, box, d, k):
    rng = np.random.default_rng(seed)
    lat = rng.uniform(box[0], box[1], n)
    lon = rng.uniform(box[2], box[3], n)
    if n > 3:
        lat[1], lon[1] = lat[0], lon[0]  # exact duplicate location
    index = GridIndex([str(i) for i in range(n)], lat, lon, "haversine", min_cell_m=d / 4)
    for q in range(min(n, 5)):
        idx, _ = index.record_range(q, d)
        assert idx.tolist() == brute_range(lat, lon, lat[q], lon[q], d, exclude=q)[0]
        idx, _ = index.record_knn(q, k)
        assert idx.tolist() == brute_knn(lat, lon, lat[q], lon[q], k, exclude=q)[0]


def test_planar_mode():
    pts = [("a", GeoPoint.planar(0, 0)), ("b", GeoPoint.planar(3, 4)), ("c", GeoPoint.planar(6, 8))]
    index = build_index(pts)
    res = range_query(index, GeoPoint.planar(0, 0), 10.0001)
    assert [(n.record_id, n.distance) for n in res] == [("a", 0.0), ("b", 5.0), ("c", 10.0)]
    assert [n.record_id for n in knn_query(index, GeoPoint.planar(6, 8), 1, exclude_id="c")] == ["b"]


def test_distance_table_index():
    index = DistanceTableIndex(["a", "b", "c"], {("a", "b"): 200.0, ("a", "c"): 800.0})
    assert [(n.record_id, n.distance) for n in range_query(index, "a", 1000)] == [("b", 200.0), ("c", 800.0)]
    assert [n.record_id for n in range_query(index, "b", 1000)] == ["a"]
    assert [n.record_id for n in knn_query(index, "c", 5)] == ["a"]
    with pytest.raises(SpatialError):
        DistanceTableIndex(["a", "b"], {("a", "b"): -1.0})
    with pytest.raises(SpatialError):
        index.position_of("zz")


def test_window_near_pole_and_antimeridian_is_complete():
    lat = np.array([89.99, 89.99, -0.5, 0.5])
    lon = np.array([0.0, 180.0, 179.999, -179.999])
    index = GridIndex(["a", "b", "c", "d"], lat, lon, "haversine")
    idx, _ = index.record_range(0, 3000.0)
    assert idx.tolist() == [1]
    idx, dist = index.record_knn(2, 1)
    assert idx.tolist() == [3]
    assert dist[0] == pytest.approx(float(haversine(-0.5, 179.999, 0.5, -179.999)))
    assert math.isfinite(dist[0])
