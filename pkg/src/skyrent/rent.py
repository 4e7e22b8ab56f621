"""Rent interpolation, score/rent tallies, correlation and hue distributions."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, DegenerateVariance, NoListingInRange
from .geo import LocalProjection

EXACT_HIT_M = 1e-6


@dataclass(frozen=True)
class RentListing:
    lon: float
    lat: float
    rent: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise DataError(f"listing has non-finite coordinates ({self.lon}, {self.lat})")
        if not self.rent > 0:
            raise DataError(f"listing rent must be positive, got {self.rent}")


@dataclass(frozen=True)
class InterpolationConfig:
    method: str = "nearest"
    idw_k: int = 4
    idw_power: float = 2.0
    max_radius_m: float = 1000.0

    def __post_init__(self):
        if self.method not in ("nearest", "idw"):
            raise ValueError(f"unknown interpolation method {self.method!r}")
        if self.idw_k < 1 or not self.idw_power > 0 or not self.max_radius_m > 0:
            raise ValueError("idw_k >= 1, idw_power > 0 and max_radius_m > 0 required")


@dataclass(frozen=True)
class ScoredRecord:
    point_id: int
    percent: float
    rent: float
    first_hue: Optional[float] = None
    second_hue: Optional[float] = None
    third_hue: Optional[float] = None
    achromatic: tuple = (False, False, False)

    def hue(self, rank: int) -> Optional[float]:
        return (self.first_hue, self.second_hue, self.third_hue)[rank - 1]


@dataclass(frozen=True)
class BinRow:
    bin: int
    mean_rent: float
    count: int


class ListingIndex:
    """Immutable projected view of the listings for repeated queries.

    The projection is centred on the listings' mean coordinate unless one is
    passed in.
    """

    def __init__(self, listings: list, projection: Optional[LocalProjection] = None):
        if not listings:
            raise DataError("no rent listings")
        lon = np.array([x.lon for x in listings])
        lat = np.array([x.lat for x in listings])
        self.projection = projection or LocalProjection(float(lat.mean()), float(lon.mean()))
        self.x, self.y = self.projection.forward(lon, lat)
        self.rents = np.array([x.rent for x in listings], dtype=np.float64)

    def __len__(self):
        return len(self.rents)

    def neighbours(self, lon: float, lat: float, k: int, radius: float) -> tuple:
        """Indices and distances of up to ``k`` listings within ``radius`` metres.

        Sorted by distance, then listing order.
        """
        px, py = self.projection.forward(lon, lat)
        d = np.hypot(self.x - px, self.y - py)
        order = np.lexsort((np.arange(len(d)), d))
        order = order[d[order] <= radius][:k]
        return order, d[order]


def assign_rent(point, listings, cfg: InterpolationConfig = InterpolationConfig()) -> float:
    """Rent at ``point`` (a SamplePoint or a ``(lon, lat)`` pair).

    Raises :class:`NoListingInRange` when no listing lies within
    ``max_radius_m``.
    """
    index = listings if isinstance(listings, ListingIndex) else ListingIndex(listings)
    lon, lat = point.snapped if hasattr(point, "snapped") else point
    k = 1 if cfg.method == "nearest" else cfg.idw_k
    idx, d = index.neighbours(lon, lat, k, cfg.max_radius_m)
    if len(idx) == 0:
        raise NoListingInRange(f"no listing within {cfg.max_radius_m:g} m of ({lon}, {lat})")
    if d[0] < EXACT_HIT_M or len(idx) == 1:
        return float(index.rents[idx[0]])
    w = d ** (-cfg.idw_power)
    return float((w * index.rents[idx]).sum() / w.sum())


def assign_rents(points: list, listings, cfg: InterpolationConfig = InterpolationConfig()) -> tuple:
    """Map point_id -> rent, plus an exclusion log of points without listings."""
    index = listings if isinstance(listings, ListingIndex) else ListingIndex(listings)
    rents, excluded = {}, []
    for p in points:
        try:
            rents[p.point_id] = assign_rent(p, index, cfg)
        except NoListingInRange as exc:
            excluded.append((p.point_id, "no_listing_in_range", str(exc)))
    return rents, excluded


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def bin_mean_rent(records: list, bin_width: float = 1.0) -> list:
    """Tally records into integer score bins and average their rents."""
    groups = {}
    for r in records:
        b = round_half_up(r.percent / bin_width) * bin_width
        b = int(b) if float(b).is_integer() else b
        groups.setdefault(b, []).append(r.rent)
    return [BinRow(b, math.fsum(v) / len(v), len(v)) for b, v in sorted(groups.items())]


def pearson(xs, ys) -> float:
    """Sample Pearson correlation, two-pass (means first, then moments)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D sequences of equal length")
    if len(x) < 2:
        raise DegenerateVariance("need at least two pairs")
    dx = x - math.fsum(x) / len(x)
    dy = y - math.fsum(y) / len(y)
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0 or syy == 0:
        raise DegenerateVariance("one of the series has zero variance")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlation_report(records: list, bin_width: float = 1.0) -> dict:
    """Correlation over the tallied series and over the raw (percent, rent) pairs."""
    series = bin_mean_rent(records, bin_width)
    return {
        "r_binned": pearson([b.bin for b in series], [b.mean_rent for b in series]),
        "r_raw": pearson([r.percent for r in records], [r.rent for r in records]),
        "n_records": len(records),
        "n_bins": len(series),
    }


@dataclass(frozen=True)
class HueHistogram:
    rank: int
    bin_width: float
    counts: np.ndarray
    achromatic: int
    missing: int

    @property
    def edges(self) -> np.ndarray:
        return np.arange(len(self.counts) + 1) * self.bin_width


def hue_histogram(records: list, rank: int = 1, bin_width_deg: float = 5.0) -> HueHistogram:
    if rank not in (1, 2, 3):
        raise ValueError("rank must be 1, 2 or 3")
    nbins = 360.0 / bin_width_deg
    if not float(nbins).is_integer():
        raise ValueError("bin width must divide 360")
    counts = np.zeros(int(nbins), dtype=np.int64)
    achromatic = missing = 0
    for r in records:
        h = r.hue(rank)
        if h is None:
            missing += 1
        elif r.achromatic[rank - 1]:
            achromatic += 1
        else:
            counts[min(int(h // bin_width_deg), len(counts) - 1)] += 1
    return HueHistogram(rank, bin_width_deg, counts, achromatic, missing)


@dataclass(frozen=True)
class DensityGrid:
    counts: np.ndarray
    hue_edges: np.ndarray
    rent_edges: np.ndarray


def hue_rent_density(records: list, hue_bins: int = 36, rent_bins: int = 20) -> DensityGrid:
    """2-D counts of first-colour hue against rent.

    Only records with a chromatic first colour take part; the rent axis spans
    their observed range linearly.
    """
    used = [r for r in records if r.first_hue is not None and not r.achromatic[0]]
    counts = np.zeros((hue_bins, rent_bins), dtype=np.int64)
    hue_edges = np.linspace(0.0, 360.0, hue_bins + 1)
    if not used:
        return DensityGrid(counts, hue_edges, np.zeros(rent_bins + 1))
    rents = np.array([r.rent for r in used])
    lo, hi = float(rents.min()), float(rents.max())
    rent_edges = np.linspace(lo, hi, rent_bins + 1)
    width = 360.0 / hue_bins
    for r in used:
        hb = min(int(r.first_hue // width), hue_bins - 1)
        rb = 0 if hi == lo else min(int((r.rent - lo) / (hi - lo) * rent_bins), rent_bins - 1)
        counts[hb, rb] += 1
    return DensityGrid(counts, hue_edges, rent_edges)


def join_records(points: list, scores: dict, colors: dict, rents: dict) -> list:
    """Join per-point sky scores, first-camera colours and rents.

    ``colors`` maps point_id to a DominantColorSet (or None). Points without
    a score or rent are left out.
    """
    out = []
    for p in points:
        if p.point_id not in scores or p.point_id not in rents:
            continue
        hues = [None, None, None]
        achrom = [False, False, False]
        cs = colors.get(p.point_id)
        if cs is not None:
            for i, e in enumerate(cs.entries[:3]):
                hues[i] = e.hsb.h
                achrom[i] = e.hsb.achromatic
        out.append(ScoredRecord(p.point_id, scores[p.point_id], rents[p.point_id],
                                hues[0], hues[1], hues[2], tuple(achrom)))
    return out


# -- files --------------------------------------------------------------------

def load_listings(path) -> list:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"lon", "lat", "rent"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected header lon,lat,rent")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(RentListing(float(row["lon"]), float(row["lat"]), float(row["rent"])))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad listing row ({exc})") from exc
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not out:
        raise DataError(f"{path}: no rent listings")
    return out


RECORDS_HEADER = ["point_id", "percent", "rent", "hue1", "hue2", "hue3",
                  "achromatic1", "achromatic2", "achromatic3"]


def record_row(r: ScoredRecord) -> list:
    def fmt(h):
        return "" if h is None else repr(h)

    return [r.point_id, repr(r.percent), repr(r.rent), fmt(r.first_hue), fmt(r.second_hue),
            fmt(r.third_hue), *[int(a) for a in r.achromatic]]


def record_from_row(row: dict) -> ScoredRecord:
    def hue(v):
        return None if v == "" else float(v)

    return ScoredRecord(
        int(row["point_id"]), float(row["percent"]), float(row["rent"]),
        hue(row["hue1"]), hue(row["hue2"]), hue(row["hue3"]),
        tuple(bool(int(row[f"achromatic{i}"])) for i in (1, 2, 3)),
    )
