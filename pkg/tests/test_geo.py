import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from skyrent import geo
from skyrent.errors import EmptyNetwork, SamplingStalled, ZeroAreaPolygon
from skyrent.geo import (LocalProjection, Road, RoadNetwork, WardPolygon, sample_in_polygon,
                         sample_ward, snap_to_road)

UNIT_SQUARE = ((0, 0), (1, 0), (1, 1), (0, 1))


def ray_cast(x, y, ring):
    """Independent even-odd test, one point at a time."""
    inside = False
    n = len(ring)
    for i in range(n):
        (x0, y0), (x1, y1) = ring[i], ring[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            if x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
                inside = not inside
    return inside


def square_with_hole():
    half = math.sqrt(0.5) / 2
    hole = ((0.5 - half, 0.5 - half), (0.5 + half, 0.5 - half),
            (0.5 + half, 0.5 + half), (0.5 - half, 0.5 + half))
    return WardPolygon("h", UNIT_SQUARE, (hole,)), hole


def test_unit_square_300_points_inside():
    pts = sample_in_polygon(WardPolygon("a", UNIT_SQUARE), 300, 42)
    assert len(pts) == 300
    assert all(0 < x < 1 and 0 < y < 1 for x, y in pts)
    assert all(ray_cast(x, y, UNIT_SQUARE) for x, y in pts)


def test_collinear_polygon_has_zero_area():
    with pytest.raises(ZeroAreaPolygon):
        sample_in_polygon(WardPolygon("c", ((0, 0), (1, 1), (2, 2))), 5, 1)


def test_hole_is_avoided():
    poly, hole = square_with_hole()
    assert poly.area == pytest.approx(0.5)
    pts = sample_in_polygon(poly, 1000, 3)
    shp = Polygon(UNIT_SQUARE, [hole])
    for x, y in pts:
        assert not ray_cast(x, y, hole)
        assert ray_cast(x, y, UNIT_SQUARE)
        assert shp.contains(Point(x, y))


def test_sampling_is_deterministic():
    poly = WardPolygon("a", ((0, 0), (3, 0), (1, 2)))
    assert sample_in_polygon(poly, 50, 9) == sample_in_polygon(poly, 50, 9)
    assert sample_in_polygon(poly, 50, 9) != sample_in_polygon(poly, 50, 10)


def test_sliver_stalls():
    sliver = WardPolygon("s", ((0, 0), (1, 1), (1, 1 + 1e-9)))
    with pytest.raises(SamplingStalled):
        sample_in_polygon(sliver, 100, 0)


def test_snap_perpendicular_and_clamp():
    net = RoadNetwork([Road("a", ((0, 0), (1, 0)))])
    proj = LocalProjection(0.0)
    s = snap_to_road((0.5, 0.2), net, proj)
    assert s.snapped == pytest.approx((0.5, 0.0))
    assert s.snap_distance_m == pytest.approx(0.2 * geo.METERS_PER_DEGREE)
    s = snap_to_road((2, 1), net, proj)
    assert s.snapped == (1.0, 0.0)
    assert s.segment_index == 0


def test_snap_tie_break_is_lexicographic():
    net = RoadNetwork([Road("b", ((0, 1), (1, 1))), Road("a", ((0, -1), (1, -1)))])
    s = snap_to_road((0.5, 0.0), net, LocalProjection(0.0))
    assert s.road_id == "a"
    net = RoadNetwork([Road("a", ((0, 1), (1, 1), (1, -1)))])
    s = snap_to_road((1.5, 0.0), net, LocalProjection(0.0))
    assert (s.road_id, s.segment_index) == ("a", 1)


def test_empty_network():
    with pytest.raises(EmptyNetwork):
        snap_to_road((0, 0), RoadNetwork([]))
    with pytest.raises(EmptyNetwork):
        sample_ward(WardPolygon("a", UNIT_SQUARE), RoadNetwork([]), 3, 0)


def test_sample_ward_on_horizontal_road():
    net = RoadNetwork([Road("r", ((-1, 0.5), (2, 0.5)))])
    pts = sample_ward(WardPolygon("w", UNIT_SQUARE), net, 10, 5)
    assert [p.point_id for p in pts] == list(range(10))
    assert all(p.snapped[1] == 0.5 for p in pts)
    assert all(p.raw[0] == pytest.approx(p.snapped[0], abs=1e-12) for p in pts)


def test_sample_ward_default_is_300():
    net = RoadNetwork([Road("r", ((0, 0.5), (1, 0.5)))])
    assert len(sample_ward(WardPolygon("w", UNIT_SQUARE), net, seed=1)) == 300


def test_two_parallel_roads_brute_force():
    net = RoadNetwork([Road("A", ((0, 0.2), (1, 0.2))), Road("B", ((0, 0.8), (1, 0.8)))])
    proj = net.projection()
    pts = sample_ward(WardPolygon("w", UNIT_SQUARE), net, 200, 11)
    for p in pts:
        da = abs(p.raw[1] - 0.2)
        db = abs(p.raw[1] - 0.8)
        assert p.road_id == ("A" if da < db else "B")
        assert p.snap_distance_m == pytest.approx(proj.distance(p.raw, p.snapped), abs=1e-6)


def test_snapped_point_lies_on_its_segment():
    rng = np.random.default_rng(4)
    net = RoadNetwork([Road(f"r{i}", tuple(map(tuple, rng.random((4, 2))))) for i in range(3)])
    pts = sample_ward(WardPolygon("w", UNIT_SQUARE), net, 100, 2)
    for p in pts:
        a = np.array(net.road(p.road_id).vertices[p.segment_index])
        b = np.array(net.road(p.road_id).vertices[p.segment_index + 1])
        s = np.array(p.snapped)
        t = np.dot(s - a, b - a) / np.dot(b - a, b - a)
        assert -1e-12 <= t <= 1 + 1e-12
        assert np.linalg.norm(a + t * (b - a) - s) < 1e-9


coords = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=100)
@given(st.lists(st.tuples(coords, coords), min_size=2, max_size=6), coords, coords)
def test_snap_beats_every_vertex_and_is_idempotent(verts, px, py):
    net = RoadNetwork([Road("r", tuple(verts))])
    proj = LocalProjection(10.0)
    s = snap_to_road((px, py), net, proj)
    for v in verts:
        assert s.snap_distance_m <= proj.distance((px, py), v) + 1e-9
    again = snap_to_road(s.snapped, net, proj)
    assert again.snap_distance_m <= 1e-9


def test_geojson_round_trip(tmp_path):
    poly, _ = square_with_hole()
    net = RoadNetwork([Road("r1", ((0, 0), (1, 1)))])
    (tmp_path / "w.geojson").write_text(json.dumps(geo.wards_to_geojson([poly])))
    (tmp_path / "r.geojson").write_text(json.dumps(geo.roads_to_geojson(net)))
    wards = geo.load_wards(tmp_path / "w.geojson")
    assert wards[0].ward_id == "h" and len(wards[0].holes) == 1
    assert wards[0].area == pytest.approx(0.5)
    assert geo.load_roads(tmp_path / "r.geojson").roads[0].road_id == "r1"


def test_point_csv_round_trip():
    p = geo.SamplePoint(3, "w", (0.1, 0.2), (0.3, 0.4), "r", 2, 12.5)
    header = geo.POINTS_HEADER
    row = dict(zip(header, map(str, geo.point_to_row(p))))
    assert geo.point_from_row(row) == p


@pytest.mark.parametrize("a, b, bearing", [
    ((0, 0), (0, 1), 0.0), ((0, 0), (1, 0), 90.0), ((0, 1), (0, 0), 180.0), ((1, 0), (0, 0), 270.0),
])
def test_segment_bearing_cardinal(a, b, bearing):
    assert geo.segment_bearing(a, b, LocalProjection(0.0)) == pytest.approx(bearing)
