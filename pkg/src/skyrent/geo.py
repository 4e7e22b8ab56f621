"""Ward polygons, road networks, point sampling and road snapping.

All distances use an equirectangular projection about a reference latitude;
at city scale the error against great-circle distance is negligible and the
geometry stays exactly testable.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, EmptyNetwork, SamplingStalled, ZeroAreaPolygon

METERS_PER_DEGREE = 111_320.0
DEFAULT_POINTS_PER_WARD = 300
MAX_REJECTIONS = 10**7
TIE_TOLERANCE_M = 1e-9


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular projection to metres about ``(ref_lon, ref_lat)``."""

    ref_lat: float
    ref_lon: float = 0.0

    @property
    def x_scale(self) -> float:
        return METERS_PER_DEGREE * math.cos(math.radians(self.ref_lat))

    def forward(self, lon, lat):
        lon = np.asarray(lon, dtype=np.float64)
        lat = np.asarray(lat, dtype=np.float64)
        return (lon - self.ref_lon) * self.x_scale, (lat - self.ref_lat) * METERS_PER_DEGREE

    def inverse(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return x / self.x_scale + self.ref_lon, y / METERS_PER_DEGREE + self.ref_lat

    def distance(self, a, b) -> float:
        ax, ay = self.forward(a[0], a[1])
        bx, by = self.forward(b[0], b[1])
        return float(math.hypot(float(ax - bx), float(ay - by)))


def _ring_array(ring) -> np.ndarray:
    arr = np.asarray(ring, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"ring must be a list of (lon, lat) pairs, got shape {arr.shape}")
    if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    return arr


def ring_area(ring) -> float:
    """Unsigned shoelace area of a ring in squared degrees."""
    arr = _ring_array(ring)
    if len(arr) < 3:
        return 0.0
    x, y = arr[:, 0], arr[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def points_in_ring(xs: np.ndarray, ys: np.ndarray, ring) -> np.ndarray:
    """Even-odd crossing test for many points against one ring."""
    arr = _ring_array(ring)
    inside = np.zeros(np.shape(xs), dtype=bool)
    x0s, y0s = arr[:, 0], arr[:, 1]
    x1s, y1s = np.roll(x0s, -1), np.roll(y0s, -1)
    for x0, y0, x1, y1 in zip(x0s, y0s, x1s, y1s):
        crosses = (y0 > ys) != (y1 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xs < x_at)
    return inside


@dataclass(frozen=True)
class WardPolygon:
    ward_id: str
    exterior: tuple
    holes: tuple = ()

    def __post_init__(self):
        rings = [self.exterior, *self.holes]
        for ring in rings:
            arr = _ring_array(ring)
            if not np.all(np.isfinite(arr)):
                raise DataError(f"ward {self.ward_id}: non-finite coordinate")
            if np.any(np.abs(arr[:, 0]) > 180) or np.any(np.abs(arr[:, 1]) > 90):
                raise DataError(f"ward {self.ward_id}: coordinate out of range")

    @property
    def area(self) -> float:
        return ring_area(self.exterior) - sum(ring_area(h) for h in self.holes)

    @property
    def bbox(self) -> tuple:
        arr = _ring_array(self.exterior)
        return (arr[:, 0].min(), arr[:, 1].min(), arr[:, 0].max(), arr[:, 1].max())

    def contains(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        inside = points_in_ring(xs, ys, self.exterior)
        for hole in self.holes:
            inside &= ~points_in_ring(xs, ys, hole)
        return inside


@dataclass(frozen=True)
class Road:
    road_id: str
    vertices: tuple

    def __post_init__(self):
        arr = np.asarray(self.vertices, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
            raise DataError(f"road {self.road_id}: needs at least 2 (lon, lat) vertices")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"road {self.road_id}: non-finite coordinate")


@dataclass
class RoadNetwork:
    roads: list = field(default_factory=list)

    def __post_init__(self):
        self._segments = None

    def mean_lat(self) -> float:
        lats = [v[1] for r in self.roads for v in r.vertices]
        return float(np.mean(lats)) if lats else 0.0

    def projection(self) -> LocalProjection:
        coords = np.array([v for r in self.roads for v in r.vertices], dtype=np.float64)
        if len(coords) == 0:
            return LocalProjection(0.0, 0.0)
        return LocalProjection(float(coords[:, 1].mean()), float(coords[:, 0].mean()))

    def segments(self) -> dict:
        """Flat segment table sorted by ``(road_id, segment_index)``."""
        if self._segments is None:
            rows = []
            for road in sorted(self.roads, key=lambda r: r.road_id):
                verts = road.vertices
                for i in range(len(verts) - 1):
                    rows.append((road.road_id, i, verts[i], verts[i + 1]))
            self._segments = {
                "road_id": [r[0] for r in rows],
                "index": np.array([r[1] for r in rows], dtype=np.int64),
                "a": np.array([r[2] for r in rows], dtype=np.float64).reshape(-1, 2),
                "b": np.array([r[3] for r in rows], dtype=np.float64).reshape(-1, 2),
            }
        return self._segments

    def road(self, road_id: str) -> Road:
        for r in self.roads:
            if r.road_id == road_id:
                return r
        raise KeyError(road_id)


@dataclass(frozen=True)
class SnapResult:
    snapped: tuple
    road_id: str
    segment_index: int
    snap_distance_m: float


@dataclass(frozen=True)
class SamplePoint:
    point_id: int
    ward_id: str
    raw: tuple
    snapped: tuple
    road_id: str
    segment_index: int
    snap_distance_m: float


def sample_in_polygon(poly: WardPolygon, n: int, seed: int) -> list:
    """Draw ``n`` uniform points inside ``poly`` by bounding-box rejection."""
    if n < 1:
        raise ValueError("n must be >= 1")
    area = poly.area
    if not area > 0:
        raise ZeroAreaPolygon(f"ward {poly.ward_id} has zero planar area")
    x0, y0, x1, y1 = poly.bbox
    acceptance = area / ((x1 - x0) * (y1 - y0))
    if n * (1.0 / acceptance - 1.0) > MAX_REJECTIONS:
        raise SamplingStalled(
            f"ward {poly.ward_id}: acceptance rate {acceptance:.2e} implies more than "
            f"{MAX_REJECTIONS} rejections"
        )

    rng = np.random.Generator(np.random.PCG64(seed))
    batch = 1024
    accepted = []
    count = 0
    rejected = 0
    while count < n:
        xs = x0 + (x1 - x0) * rng.random(batch)
        ys = y0 + (y1 - y0) * rng.random(batch)
        ok = poly.contains(xs, ys)
        rejected += int((~ok).sum())
        if rejected > MAX_REJECTIONS:
            raise SamplingStalled(f"ward {poly.ward_id}: exceeded {MAX_REJECTIONS} rejections")
        pts = np.column_stack([xs[ok], ys[ok]])
        accepted.append(pts)
        count += len(pts)
    out = np.concatenate(accepted)[:n]
    return [(float(x), float(y)) for x, y in out]


def snap_to_road(p, net: RoadNetwork, projection: Optional[LocalProjection] = None) -> SnapResult:
    """Closest point on any road segment to ``p``.

    Equidistant candidates (within 1e-9 m) resolve to the smallest
    ``(road_id, segment_index)``.
    """
    if not net.roads:
        raise EmptyNetwork("road network is empty")
    proj = projection or net.projection()
    seg = net.segments()
    ax, ay = proj.forward(seg["a"][:, 0], seg["a"][:, 1])
    bx, by = proj.forward(seg["b"][:, 0], seg["b"][:, 1])
    px, py = proj.forward(p[0], p[1])

    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((px - ax) * dx + (py - ay) * dy) / len2
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    fx, fy = ax + t * dx, ay + t * dy
    dist = np.hypot(px - fx, py - fy)

    best = int(np.flatnonzero(dist <= dist.min() + TIE_TOLERANCE_M)[0])
    a, b = seg["a"][best], seg["b"][best]
    tb = float(t[best])
    if tb == 0.0:
        snapped = (float(a[0]), float(a[1]))
    elif tb == 1.0:
        snapped = (float(b[0]), float(b[1]))
    else:
        snapped = (float(a[0] + tb * (b[0] - a[0])), float(a[1] + tb * (b[1] - a[1])))
    return SnapResult(snapped, seg["road_id"][best], int(seg["index"][best]), float(dist[best]))


def sample_ward(poly: WardPolygon, net: RoadNetwork, n: int = DEFAULT_POINTS_PER_WARD,
                seed: int = 0, first_id: int = 0,
                projection: Optional[LocalProjection] = None) -> list:
    """Sample ``n`` points in a ward and snap each to the road network.

    Snapped duplicates are kept; callers that want distinct locations can
    filter on ``snapped``.
    """
    if not net.roads:
        raise EmptyNetwork("road network is empty")
    proj = projection or net.projection()
    out = []
    for i, raw in enumerate(sample_in_polygon(poly, n, seed)):
        s = snap_to_road(raw, net, proj)
        out.append(SamplePoint(first_id + i, poly.ward_id, raw, s.snapped, s.road_id,
                               s.segment_index, s.snap_distance_m))
    return out


def sample_wards(wards: list, net: RoadNetwork, n: int, root_seed: int) -> list:
    """Sample every ward in ``ward_id`` order with per-ward derived seeds."""
    from .seeding import derive_seed

    proj = net.projection()
    points = []
    for poly in sorted(wards, key=lambda w: w.ward_id):
        points.extend(sample_ward(poly, net, n, derive_seed(root_seed, "sample", poly.ward_id),
                                  first_id=len(points), projection=proj))
    return points


def segment_bearing(a, b, projection: LocalProjection) -> float:
    """Compass bearing in degrees of the segment a->b (0 = north, 90 = east)."""
    ax, ay = projection.forward(a[0], a[1])
    bx, by = projection.forward(b[0], b[1])
    return math.degrees(math.atan2(float(bx - ax), float(by - ay))) % 360.0


# -- GeoJSON / CSV ------------------------------------------------------------

def load_wards(path) -> list:
    with open(path) as fh:
        doc = json.load(fh)
    wards = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "Polygon":
            raise DataError(f"{path}: feature {i} is {geom.get('type')!r}, expected Polygon")
        if "ward_id" not in props:
            raise DataError(f"{path}: feature {i} has no ward_id property")
        rings = geom["coordinates"]
        wards.append(WardPolygon(str(props["ward_id"]),
                                 tuple(map(tuple, rings[0])),
                                 tuple(tuple(map(tuple, h)) for h in rings[1:])))
    return wards


def load_roads(path) -> RoadNetwork:
    with open(path) as fh:
        doc = json.load(fh)
    roads = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "LineString":
            raise DataError(f"{path}: feature {i} is {geom.get('type')!r}, expected LineString")
        if "road_id" not in props:
            raise DataError(f"{path}: feature {i} has no road_id property")
        roads.append(Road(str(props["road_id"]), tuple(map(tuple, geom["coordinates"]))))
    return RoadNetwork(roads)


def wards_to_geojson(wards: list) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"ward_id": w.ward_id},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(v) for v in ring] for ring in (w.exterior, *w.holes)],
                },
            }
            for w in wards
        ],
    }


def roads_to_geojson(net: RoadNetwork) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"road_id": r.road_id},
                "geometry": {"type": "LineString", "coordinates": [list(v) for v in r.vertices]},
            }
            for r in net.roads
        ],
    }


POINTS_HEADER = ["point_id", "ward_id", "raw_lon", "raw_lat", "snap_lon", "snap_lat",
                 "road_id", "segment_index", "snap_distance_m"]


def point_to_row(p: SamplePoint) -> list:
    return [p.point_id, p.ward_id, repr(p.raw[0]), repr(p.raw[1]), repr(p.snapped[0]),
            repr(p.snapped[1]), p.road_id, p.segment_index, repr(p.snap_distance_m)]


def point_from_row(row: dict) -> SamplePoint:
    return SamplePoint(
        int(row["point_id"]), row["ward_id"],
        (float(row["raw_lon"]), float(row["raw_lat"])),
        (float(row["snap_lon"]), float(row["snap_lat"])),
        row["road_id"], int(row["segment_index"]), float(row["snap_distance_m"]),
    )
