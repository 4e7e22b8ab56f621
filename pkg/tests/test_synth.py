import csv

import numpy as np
import pytest

from skyrent.errors import BadPalette
from skyrent.imaging import decode
from skyrent.synth import (GREEN, RED, YELLOW, CitySpec, SkySceneSpec, gen_city, gen_sidewalk_image,
                           gen_sky_image)


def test_full_sky():
    img, mask, frac = gen_sky_image(SkySceneSpec(sky_fraction=1.0))
    assert frac == 1.0 and mask.bits.all()


def test_half_sky_is_exact():
    _, mask, frac = gen_sky_image(SkySceneSpec(64, 64, 0.5, 0))
    assert frac == 0.5
    assert mask.bits[:32].all() and not mask.bits[32:].any()


@pytest.mark.parametrize("seed", range(10))
def test_rough_skyline_fraction(seed):
    _, mask, frac = gen_sky_image(SkySceneSpec(64, 64, 0.7, 4, seed=seed))
    assert 0.65 <= frac <= 0.75
    assert frac == mask.bits.mean()
    # column-wise height field
    col = mask.bits.sum(axis=0)
    assert np.array_equal(mask.bits, np.arange(64)[:, None] < col[None, :])


def test_sky_spec_validation():
    with pytest.raises(ValueError):
        SkySceneSpec(64, 64, 1.2)
    with pytest.raises(ValueError):
        SkySceneSpec(64, 64, 0.5, 16)


def test_single_colour_sidewalk():
    img = gen_sidewalk_image([(GREEN, 1.0)])
    assert (img.flat() == GREEN).all()


def test_palette_proportions():
    img = gen_sidewalk_image([(GREEN, 0.6), (YELLOW, 0.3), (RED, 0.1)], 0.0, seed=2, dims=(100, 100))
    px = img.flat()
    props = [float((px == c).all(axis=1).mean()) for c in (GREEN, YELLOW, RED)]
    assert props == pytest.approx([0.6, 0.3, 0.1], abs=0.02)


def test_bad_palette():
    with pytest.raises(BadPalette):
        gen_sidewalk_image([(GREEN, 0.6), (RED, 0.3)])


def test_generators_are_deterministic():
    a = gen_sky_image(SkySceneSpec(32, 32, 0.3, 2, noise_sigma=5, seed=9))
    b = gen_sky_image(SkySceneSpec(32, 32, 0.3, 2, noise_sigma=5, seed=9))
    assert a[0] == b[0] and a[1] == b[1]


def test_city_counts_and_files(tmp_path):
    city = gen_city(CitySpec(points_per_ward=10))
    assert len(city.points) == 40
    assert len(city.images) == 120 and len(city.manifest) == 120
    city.write(tmp_path)
    assert len(list((tmp_path / "images").glob("*.png"))) == 120
    with open(tmp_path / "truth_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    for row in rows:
        assert float(row["true_percent"]) == 100 * int(row["sky_pixels"]) / int(row["total_pixels"])
    img = decode((tmp_path / "images" / "0_sky.png").read_bytes())
    assert img == city.images[(0, "sky")]


def test_city_is_deterministic(tmp_path):
    gen_city(CitySpec(points_per_ward=5, seed=3)).write(tmp_path / "a")
    gen_city(CitySpec(points_per_ward=5, seed=3)).write(tmp_path / "b")
    for p in sorted((tmp_path / "a").rglob("*")):
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def test_city_rents_follow_model_and_green_falls():
    city = gen_city(CitySpec(rent_noise_frac=0.0))
    for t in city.truth:
        assert t["rent"] == pytest.approx(150 * t["true_percent"] + 5000)
    assert city.truth_r() == pytest.approx(1.0, abs=1e-12)
    rents = np.array([t["rent"] for t in city.truth])
    greens = np.array([t["green_proportion"] for t in city.truth])
    assert np.corrcoef(rents, greens)[0, 1] < -0.99
