import csv
import json
import os
import re

import pytest

from skyrent.cli import run

SMALL = {"synth": {"points_per_ward": 5}}
REPORT_FILES = ["points.csv", "manifest.jsonl", "fetch_log.csv", "sky_scores.csv", "sky_log.csv",
                "colors.csv", "colors_log.csv", "records.csv", "exclusions.csv", "binned.csv",
                "correlations.csv", "hue_histogram.csv", "rent_vs_sky.svg", "hue_histograms.svg",
                "hue_rent_density.csv", "hue_rent_density.svg"]


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "cfg.json", SMALL)
    assert run(["pipeline", "--synthetic", "--config", cfg, "--seed", "7", "--out", str(root / "run")]) == 0
    return root, cfg


def test_pipeline_produces_reports(small_run):
    root, _ = small_run
    for name in REPORT_FILES:
        assert (root / "run" / name).is_file(), name
    for name in ("rent_vs_sky.svg", "hue_histograms.svg", "hue_rent_density.svg"):
        text = (root / "run" / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
        assert not re.search(r"\d{4}-\d{2}-\d{2}|\d{2}:\d{2}:\d{2}", text)


def test_stages_compose(small_run, tmp_path):
    root, _ = small_run
    synth = root / "run" / "synth"
    out = tmp_path / "staged"
    # synthetic images are 64x64; match the camera size
    cfg2 = write_config(tmp_path / "cfg2.json", {**SMALL, "cameras": {"width_px": 64, "height_px": 64}})
    common = ["--config", cfg2, "--seed", "7", "--out", str(out)]
    assert run(["sample", "--wards", str(synth / "wards.geojson"),
                "--roads", str(synth / "roads.geojson"), "--n", "5", *common]) == 0
    assert run(["manifest", "--roads", str(synth / "roads.geojson"), *common]) == 0
    assert run(["fetch", "--images-root", str(synth / "images"), *common]) == 0
    assert run(["sky", *common]) == 0
    assert run(["colors", *common]) == 0
    assert run(["join", "--listings", str(synth / "listings.csv"), *common]) == 0
    assert run(["report", *common]) == 0
    for name in REPORT_FILES:
        assert (out / name).read_bytes() == (root / "run" / name).read_bytes(), name


def test_rerun_is_byte_identical(small_run, tmp_path):
    root, cfg = small_run
    out = tmp_path / "again"
    assert run(["pipeline", "--synthetic", "--config", cfg, "--seed", "7", "--out", str(out)]) == 0
    for name in REPORT_FILES:
        assert (out / name).read_bytes() == (root / "run" / name).read_bytes(), name


def test_sky_skips_missing_image(small_run, tmp_path, capsys):
    root, cfg = small_run
    manifest = [json.loads(l) for l in (root / "run" / "manifest.jsonl").read_text().splitlines()]
    sky = next(m for m in manifest if m["camera_label"] == "sky" and m["status"] == "fetched")
    sky["image"] = "zz/missing.png"
    mpath = tmp_path / "manifest.jsonl"
    mpath.write_text("".join(json.dumps(m) + "\n" for m in manifest))
    out = tmp_path / "sky"
    code = run(["sky", "--manifest", str(mpath), "--store", str(root / "run" / "store"),
                "--config", cfg, "--out", str(out)])
    assert code == 0
    with open(out / "sky_log.csv") as fh:
        log = list(csv.DictReader(fh))
    assert {(int(r["point_id"]), r["reason"]) for r in log} == {(sky["point_id"], "missing_image")}
    with open(out / "sky_scores.csv") as fh:
        ids = {int(r["point_id"]) for r in csv.DictReader(fh)}
    assert sky["point_id"] not in ids


def test_join_with_empty_listings(small_run, tmp_path, capsys):
    root, cfg = small_run
    empty = tmp_path / "empty_listings.csv"
    empty.write_text("lon,lat,rent\n")
    run_dir = root / "run"
    code = run(["join", "--points", str(run_dir / "points.csv"),
                "--sky-scores", str(run_dir / "sky_scores.csv"), "--colors", str(run_dir / "colors.csv"),
                "--listings", str(empty), "--out", str(tmp_path / "j")])
    assert code == 2
    assert str(empty) in capsys.readouterr().err


def test_missing_input_is_data_error(tmp_path, capsys):
    assert run(["report", "--records", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert "nope.csv" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["sample"], ["pipeline", "--jobs", "x"], ["pipeline", "--jobs", "0"],
    ["pipeline"], ["config", "--seed", "-1"],
])
def test_usage_errors(argv, tmp_path):
    with_out = argv + ["--out", str(tmp_path)] if argv and argv[0] in ("pipeline", "config") else argv
    try:
        code = run(with_out)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_bad_config_keys(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"sky": {"K": 3}})
    assert run(["config", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "sky" in capsys.readouterr().err


def test_config_lists_defaults(tmp_path, capsys):
    assert run(["config", "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema_version"] == 1
    assert doc["sampling"]["points_per_ward"] == 300
    assert doc["colors"]["k"] == 3 and doc["colors"]["max_pixels"] == 10000
    assert doc["segmentation"]["K"] == 2
    assert doc["interpolation"]["max_radius_m"] == 1000.0
    assert doc["cameras"]["sidewalk_fov_deg"] == 60.0
    assert "seed" not in doc["segmentation"]


def test_http_key_comes_from_environment_only(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("SKYRENT_API_KEY", raising=False)
    cfg = write_config(tmp_path / "c.json", {"provider": {"kind": "http", "url_template": "http://x/?k={key}"}})
    (tmp_path / "manifest.jsonl").write_text(
        json.dumps({"point_id": 0, "camera_label": "sky", "lon": 0.0, "lat": 0.0, "heading_deg": 0.0,
                    "pitch_deg": 90.0, "fov_deg": 120.0, "width_px": 8, "height_px": 8,
                    "source": "", "status": "pending", "image": "", "reason": ""}) + "\n")
    assert run(["fetch", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "SKYRENT_API_KEY" in capsys.readouterr().err
    assert "SKYRENT_API_KEY" not in os.environ
