"""Synthetic ground-truth data: sky scenes, planted palettes and whole cities.

Every generator returns its truth alongside the artifact (truth masks, truth
tables) so tests never need another source of ground truth.
"""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .acquisition import build_manifest, default_cameras, manifest_to_jsonl
from .errors import BadPalette
from .geo import (POINTS_HEADER, Road, RoadNetwork, WardPolygon, point_to_row,
                  roads_to_geojson, sample_wards, wards_to_geojson)
from .imaging import BinaryMask, RasterImage, encode
from .rent import pearson
from .seeding import derive_seed, make_rng

SKY_BLUE = (135, 206, 235)
GROUND_GRAY = (90, 90, 90)
GREEN = (34, 139, 34)
YELLOW = (240, 200, 40)
RED = (200, 30, 30)


@dataclass(frozen=True)
class SkySceneSpec:
    width: int = 64
    height: int = 64
    sky_fraction: float = 0.5
    skyline_roughness: int = 0
    sky_rgb: tuple = SKY_BLUE
    ground_rgb: tuple = GROUND_GRAY
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sky_fraction <= 1.0:
            raise ValueError("sky_fraction must be in [0, 1]")
        if self.skyline_roughness < 0 or self.skyline_roughness >= self.height / 4:
            raise ValueError("skyline_roughness must be in [0, height/4)")


def _noisy(base: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, 1.0, base.shape) * sigma
    return np.clip(np.floor(base + noise + 0.5), 0, 255).astype(np.uint8)


def gen_sky_image(spec: SkySceneSpec) -> tuple:
    """Upward view with a column-wise skyline.

    Column ``x`` has ``f*height + A*sin(2*pi*x/P + phase)`` sky rows (rounded,
    clamped), with ``A <= roughness`` and period ``P`` between one and two
    image widths, so the skyline changes by at most one row per column.
    Returns ``(image, truth_mask, true_fraction)``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    w, h = spec.width, spec.height
    amp = spec.skyline_roughness * rng.uniform(0.5, 1.0)
    period = w * rng.uniform(1.0, 2.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    cols = np.arange(w)
    rows = spec.sky_fraction * h + amp * np.sin(2.0 * math.pi * cols / period + phase)
    sky_rows = np.clip(np.floor(rows + 0.5), 0, h).astype(np.int64)
    truth = np.arange(h)[:, None] < sky_rows[None, :]

    base = np.where(truth[..., None], np.array(spec.sky_rgb, float), np.array(spec.ground_rgb, float))
    img = RasterImage(_noisy(base, spec.noise_sigma, rng))
    mask = BinaryMask(truth)
    return img, mask, float(truth.sum()) / truth.size


def gen_sidewalk_image(palette: list, noise_sigma: float = 0.0, seed: int = 0,
                       dims: tuple = (64, 64)) -> RasterImage:
    """Pixels drawn i.i.d. from ``palette = [(rgb, proportion), ...]`` plus noise."""
    colors = np.array([c for c, _ in palette], dtype=np.float64).reshape(-1, 3)
    probs = np.array([p for _, p in palette], dtype=np.float64)
    if len(probs) == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise BadPalette(f"palette proportions must be non-negative and sum to 1, got {probs.sum()}")
    rng = np.random.Generator(np.random.PCG64(seed))
    w, h = dims
    idx = rng.choice(len(probs), size=(h, w), p=probs / probs.sum())
    return RasterImage(_noisy(colors[idx], noise_sigma, rng))


@dataclass(frozen=True)
class CitySpec:
    """Grid city with one horizontal road per ward.

    Rent follows ``rent_slope * percent + rent_intercept`` plus Gaussian noise
    with sigma ``rent_noise_frac`` times the planted rent range. The green
    share of each sidewalk palette falls linearly from ``green_at_low_rent``
    to ``green_at_high_rent`` across the rent range.
    """

    wards_x: int = 2
    wards_y: int = 2
    points_per_ward: int = 25
    origin_lon: float = 90.38
    origin_lat: float = 23.72
    ward_size_deg: float = 0.01
    rent_slope: float = 150.0
    rent_intercept: float = 5000.0
    rent_noise_frac: float = 0.10
    sky_fraction_range: tuple = (0.1, 0.9)
    sky_roughness: int = 3
    sky_noise: float = 6.0
    sky_dims: tuple = (64, 64)
    sidewalk_dims: tuple = (64, 64)
    sidewalk_noise: float = 0.0
    green_at_low_rent: float = 0.75
    green_at_high_rent: float = 0.15
    seed: int = 0

    def __post_init__(self):
        lo_f, hi_f = self.sky_fraction_range
        if not 0 <= lo_f <= hi_f <= 1:
            raise ValueError("sky_fraction_range must be within [0, 1]")
        if self.rent_intercept <= 0 or self.rent_intercept + 100 * self.rent_slope <= 0:
            raise ValueError("rent model must give positive rents over [0, 100]")


TRUTH_HEADER = ["point_id", "ward_id", "snap_lon", "snap_lat", "true_fraction", "true_percent",
                "sky_pixels", "total_pixels", "planted_rent", "rent", "green_proportion"]


@dataclass
class CityDataset:
    spec: CitySpec
    wards: list
    roads: RoadNetwork
    points: list
    images: dict
    manifest: list
    listings: list
    truth: list = field(default_factory=list)

    def truth_r(self) -> float:
        return pearson([t["true_percent"] for t in self.truth], [t["rent"] for t in self.truth])

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "wards.geojson").write_text(json.dumps(wards_to_geojson(self.wards), indent=1) + "\n")
        (out / "roads.geojson").write_text(json.dumps(roads_to_geojson(self.roads), indent=1) + "\n")
        for (pid, label), img in sorted(self.images.items()):
            (out / "images" / f"{pid}_{label}.png").write_bytes(encode(img))
        (out / "manifest.jsonl").write_text(manifest_to_jsonl(self.manifest))
        with open(out / "listings.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["lon", "lat", "rent"])
            for l in self.listings:
                wr.writerow([repr(l[0]), repr(l[1]), repr(l[2])])
        with open(out / "points.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(POINTS_HEADER)
            for p in self.points:
                wr.writerow(point_to_row(p))
        with open(out / "truth_table.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(TRUTH_HEADER)
            for t in self.truth:
                wr.writerow([t[k] if isinstance(t[k], (int, str)) else repr(t[k])
                             for k in TRUTH_HEADER])


def _city_geometry(spec: CitySpec) -> tuple:
    s = spec.ward_size_deg
    wards, roads = [], []
    for j in range(spec.wards_y):
        for i in range(spec.wards_x):
            x0 = spec.origin_lon + i * s
            y0 = spec.origin_lat + j * s
            wid = f"W{j:02d}{i:02d}"
            wards.append(WardPolygon(wid, ((x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s))))
            ymid = y0 + 0.5 * s
            roads.append(Road(f"R{j:02d}{i:02d}", ((x0, ymid), (x0 + s, ymid))))
    return wards, roads


def _with_vertices(road: Road, extra: list) -> Road:
    """Insert collinear vertices (snapped points) into a straight road."""
    (ax, ay), (bx, by) = road.vertices[0], road.vertices[-1]
    pts = {tuple(v) for v in road.vertices} | {tuple(v) for v in extra}
    key = (lambda v: v[0]) if abs(bx - ax) >= abs(by - ay) else (lambda v: v[1])
    ordered = sorted(pts, key=key, reverse=key((bx, by)) < key((ax, ay)))
    return Road(road.road_id, tuple(ordered))


def gen_city(spec: CitySpec) -> CityDataset:
    """Build a complete synthetic dataset.

    Point sampling uses the same seed derivation as the ``sample`` stage, so
    a pipeline run with ``seed = spec.seed`` reproduces the same point ids.
    Listings sit on road vertices placed at each snapped point, which makes
    the nearest-listing rent of a point its planted rent.
    """
    wards, roads = _city_geometry(spec)
    base_net = RoadNetwork(roads)
    points = sample_wards(wards, base_net, spec.points_per_ward, spec.seed)

    by_road = {}
    for p in points:
        by_road.setdefault(p.road_id, []).append(p.snapped)
    net = RoadNetwork([_with_vertices(r, by_road.get(r.road_id, [])) for r in roads])

    lo_f, hi_f = spec.sky_fraction_range
    truth, images = [], {}
    for p in points:
        rng = make_rng(spec.seed, "city", "sky", p.point_id)
        f = float(rng.uniform(lo_f, hi_f))
        scene = SkySceneSpec(spec.sky_dims[0], spec.sky_dims[1], f, spec.sky_roughness,
                             SKY_BLUE, GROUND_GRAY, spec.sky_noise,
                             derive_seed(spec.seed, "city", "scene", p.point_id))
        img, mask, frac = gen_sky_image(scene)
        images[(p.point_id, "sky")] = img
        sky_px = int(mask.bits.sum())
        truth.append({
            "point_id": p.point_id, "ward_id": p.ward_id,
            "snap_lon": p.snapped[0], "snap_lat": p.snapped[1],
            "true_fraction": frac, "true_percent": 100.0 * sky_px / mask.bits.size,
            "sky_pixels": sky_px, "total_pixels": int(mask.bits.size),
        })

    planted = np.array([spec.rent_slope * t["true_percent"] + spec.rent_intercept for t in truth])
    spread = float(planted.max() - planted.min()) if len(planted) else 0.0
    noise_rng = make_rng(spec.seed, "city", "rent")
    rents = planted + noise_rng.normal(0.0, 1.0, len(planted)) * spec.rent_noise_frac * spread
    rents = np.maximum(rents, 1.0)
    rlo, rhi = float(rents.min()), float(rents.max())

    listings = []
    for t, p, pr, r in zip(truth, points, planted, rents):
        frac = 0.0 if rhi == rlo else (r - rlo) / (rhi - rlo)
        green = spec.green_at_low_rent + (spec.green_at_high_rent - spec.green_at_low_rent) * frac
        green = float(np.clip(green, 0.0, 1.0))
        rest = 1.0 - green
        palette = [(GREEN, green), (YELLOW, 0.6 * rest), (RED, 1.0 - green - 0.6 * rest)]
        for label in ("left", "right"):
            images[(p.point_id, label)] = gen_sidewalk_image(
                palette, spec.sidewalk_noise,
                derive_seed(spec.seed, "city", "sidewalk", p.point_id, label), spec.sidewalk_dims)
        t.update(planted_rent=float(pr), rent=float(r), green_proportion=green)
        listings.append((p.snapped[0], p.snapped[1], float(r)))

    cams = default_cameras(spec.sky_dims[0], spec.sky_dims[1])
    cams = [c if c.label == "sky" else replace(c, width_px=spec.sidewalk_dims[0],
                                               height_px=spec.sidewalk_dims[1]) for c in cams]
    manifest = [replace(e, source=f"images/{e.point_id}_{e.camera_label}.png")
                for e in build_manifest(points, cams, net)]
    return CityDataset(spec, wards, net, points, images, manifest, listings, truth)
