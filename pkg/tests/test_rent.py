import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skyrent import rent
from skyrent.errors import DataError, DegenerateVariance, NoListingInRange
from skyrent.geo import METERS_PER_DEGREE
from skyrent.rent import (InterpolationConfig, RentListing, ScoredRecord, assign_rent, bin_mean_rent,
                          correlation_report, hue_histogram, hue_rent_density, pearson)

DEG_100M = 100.0 / METERS_PER_DEGREE


def rec(pid, percent, r, hue=None, achrom=False):
    return ScoredRecord(pid, percent, r, hue, None, None, (achrom, False, False))


def test_nearest_single_listing():
    assert assign_rent((0.0, 0.0), [RentListing(DEG_100M, 0.0, 15000)]) == 15000


def test_idw_symmetry():
    ls = [RentListing(DEG_100M, 0.0, 10000), RentListing(-DEG_100M, 0.0, 20000)]
    cfg = InterpolationConfig(method="idw")
    assert assign_rent((0.0, 0.0), ls, cfg) == pytest.approx(15000)


def test_out_of_range():
    with pytest.raises(NoListingInRange):
        assign_rent((0.0, 0.0), [RentListing(11 * DEG_100M, 0.0, 1)])


def test_exact_hit():
    ls = [RentListing(0.0, 0.0, 7), RentListing(DEG_100M, 0.0, 9)]
    assert assign_rent((0.0, 0.0), ls, InterpolationConfig(method="idw")) == 7


def test_assign_rents_logs_exclusions():
    from skyrent.geo import SamplePoint
    pts = [SamplePoint(0, "w", (0, 0), (0, 0), "r", 0, 0.0), SamplePoint(1, "w", (1, 1), (1, 1), "r", 0, 0.0)]
    rents, excluded = rent.assign_rents(pts, [RentListing(0.0, 0.0, 5)])
    assert rents == {0: 5.0}
    assert [e[0] for e in excluded] == [1]


listing_st = st.tuples(st.floats(-0.005, 0.005), st.floats(-0.005, 0.005), st.floats(1, 1e5))


@settings(max_examples=100)
@given(st.lists(listing_st, min_size=1, max_size=8), st.floats(-0.003, 0.003), st.floats(-0.003, 0.003))
def test_nearest_equals_idw_k1(ls, x, y):
    listings = [RentListing(*t) for t in ls]
    try:
        a = assign_rent((x, y), listings)
    except NoListingInRange:
        with pytest.raises(NoListingInRange):
            assign_rent((x, y), listings, InterpolationConfig(method="idw", idw_k=1))
        return
    assert a == assign_rent((x, y), listings, InterpolationConfig(method="idw", idw_k=1))


def test_bin_examples():
    rows = bin_mean_rent([rec(0, 10.2, 100), rec(1, 10.4, 200)])
    assert [(b.bin, b.mean_rent, b.count) for b in rows] == [(10, 150.0, 2)]
    assert [(b.bin, b.mean_rent) for b in bin_mean_rent([rec(0, 99.7, 500)])] == [(100, 500.0)]
    assert bin_mean_rent([]) == []


def test_round_half_up():
    assert [rent.round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999, 99.5)] == [1, 2, 3, 2, 100]


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(1, 1e6)), min_size=1, max_size=60))
def test_bin_conserves_totals(pairs):
    rows = bin_mean_rent([rec(i, p, r) for i, (p, r) in enumerate(pairs)])
    total = math.fsum(r for _, r in pairs)
    assert math.fsum(b.mean_rent * b.count for b in rows) == pytest.approx(total, rel=1e-6)
    assert [b.bin for b in rows] == sorted({b.bin for b in rows})


def test_pearson_examples():
    xs = list(range(1, 11))
    assert pearson(xs, [2 * x + 1 for x in xs]) == pytest.approx(1.0, abs=1e-12)
    assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-12)
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)


def test_pearson_degenerate():
    with pytest.raises(DegenerateVariance):
        pearson([1, 2, 3], [4, 4, 4])
    with pytest.raises(DegenerateVariance):
        pearson([1], [2])


finite = st.floats(-1e3, 1e3)


@settings(max_examples=100)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=30), st.floats(0.1, 10), finite)
def test_pearson_properties(pairs, scale, shift):
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    if np.std(xs) < 1e-3 or np.std(ys) < 1e-3:
        return
    r = pearson(xs, ys)
    assert -1.0 <= r <= 1.0
    assert pearson(ys, xs) == pytest.approx(r, abs=1e-9)
    assert pearson([scale * x + shift for x in xs], ys) == pytest.approx(r, abs=1e-6)


def test_pearson_matches_numpy():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=200), rng.normal(size=200)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_constant_rent_report():
    with pytest.raises(DegenerateVariance):
        correlation_report([rec(i, i * 10.0, 100) for i in range(5)])


def test_planted_relation_report():
    rng = np.random.default_rng(1)
    a, b = 150.0, 5000.0
    pct = rng.uniform(0, 100, 300)
    rents = a * pct + b + rng.normal(0, 0.05 * a * 100, 300)
    out = correlation_report([rec(i, p, r) for i, (p, r) in enumerate(zip(pct, rents))])
    assert out["r_binned"] >= out["r_raw"] > 0.9


def test_hue_histogram_examples():
    h = hue_histogram([rec(i, 1, 1, 120.0) for i in range(7)])
    assert np.flatnonzero(h.counts).tolist() == [24] and h.counts[24] == 7
    empty = hue_histogram([])
    assert len(empty.counts) == 72 and not empty.counts.any()
    mixed = hue_histogram([rec(0, 1, 1, 0.0, achrom=True), rec(1, 1, 1, None), rec(2, 1, 1, 359.9)])
    assert (mixed.achromatic, mixed.missing, int(mixed.counts[71])) == (1, 1, 1)
    with pytest.raises(ValueError):
        hue_histogram([], bin_width_deg=7)


def test_density_single_and_conservation():
    g = hue_rent_density([rec(0, 1, 500, 100.0)])
    assert g.counts.sum() == 1 and (g.counts > 0).sum() == 1
    rng = np.random.default_rng(2)
    recs = [rec(i, 1, float(r), float(h)) for i, (r, h) in
            enumerate(zip(rng.uniform(100, 900, 500), rng.uniform(0, 360, 500)))]
    recs.append(rec(999, 1, 300, None))
    assert hue_rent_density(recs).counts.sum() == 500


def test_load_listings_errors(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("lon,lat,rent\n")
    with pytest.raises(DataError, match=str(p)):
        rent.load_listings(p)
    p.write_text("lon,lat,rent\n1,2,-5\n")
    with pytest.raises(DataError, match="l.csv"):
        rent.load_listings(p)
    p.write_text("lon,lat,rent\n90.1,23.7,12000\n")
    assert rent.load_listings(p) == [RentListing(90.1, 23.7, 12000.0)]


def test_record_round_trip():
    r = ScoredRecord(4, 37.5, 12345.6, 120.0, 55.5, None, (False, True, False))
    row = dict(zip(rent.RECORDS_HEADER, map(str, rent.record_row(r))))
    assert rent.record_from_row(row) == r
