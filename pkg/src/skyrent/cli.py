"""Command-line entry point: ``skyrent <stage> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import acquisition, geo, rent, svg
from .colors import COLORS_HEADER, ColorEntry, DominantColorSet, color_rows, dominant_colors
from .config import Config, config_to_dict, load_config
from .errors import DataError, MalformedImage, UsageError
from .imaging import HsbColor, apply_skyprint, decode, encode
from .seeding import derive_seed
from .sky import segment_sky, sky_visibility_score
from .synth import gen_city

logger = logging.getLogger("skyrent")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- small file helpers ---------------------------------------------------------

def _write_csv(path: Path, header: list, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _read_csv(path: Path, required: list) -> list:
    if not Path(path).is_file():
        raise DataError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(required) - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        return list(reader)


def _require(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise DataError(f"{what} {path}: file not found")
    return Path(path)


def _read_points(path: Path) -> list:
    rows = _read_csv(path, geo.POINTS_HEADER)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            out.append(geo.point_from_row(row))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad point row ({exc})") from exc
    return out


def _map_jobs(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# -- per-image workers (module level so they pickle) ---------------------------------

def _sky_task(args):
    point_id, path, seg_cfg, want_print = args
    try:
        img = decode(Path(path).read_bytes())
    except FileNotFoundError:
        return point_id, None, "missing_image", None
    except MalformedImage:
        return point_id, None, "undecodable", None
    mask = segment_sky(img, seg_cfg)
    score = sky_visibility_score(mask, point_id)
    png = encode(apply_skyprint(img, mask)) if want_print else None
    return point_id, score, "", png


def _colors_task(args):
    point_id, label, path, km_cfg = args
    try:
        img = decode(Path(path).read_bytes())
    except FileNotFoundError:
        return point_id, label, None, "missing_image"
    except MalformedImage:
        return point_id, label, None, "undecodable"
    return point_id, label, dominant_colors(img, km_cfg, point_id, label), ""


# -- stages ---------------------------------------------------------------------------

def stage_sample(cfg: Config, wards_path, roads_path, out: Path, n=None) -> Path:
    wards = geo.load_wards(_require(wards_path, "wards"))
    net = geo.load_roads(_require(roads_path, "roads"))
    if not net.roads:
        raise DataError(f"roads {roads_path}: no LineString features")
    pts = geo.sample_wards(wards, net, n or cfg.sampling.points_per_ward, cfg.seed)
    path = out / "points.csv"
    _write_csv(path, geo.POINTS_HEADER, (geo.point_to_row(p) for p in pts))
    snapped = [p.snapped for p in pts]
    dupes = len(snapped) - len(set(snapped))
    if dupes:
        logger.info("%d sampled points share a snapped location with another point", dupes)
    return path


def stage_manifest(cfg: Config, points_path, roads_path, out: Path) -> Path:
    pts = _read_points(_require(points_path, "points"))
    net = geo.load_roads(_require(roads_path, "roads"))
    c = cfg.cameras
    cams = acquisition.default_cameras(c.width_px, c.height_px, c.sky_fov_deg, c.sidewalk_fov_deg)
    try:
        entries = acquisition.build_manifest(pts, cams, net)
    except (KeyError, IndexError) as exc:
        raise DataError(f"{points_path}: point references unknown road segment {exc}") from exc
    path = out / "manifest.jsonl"
    acquisition.write_manifest(path, entries)
    return path


def make_provider(cfg: Config, images_root=None):
    p = cfg.provider
    if p.kind == "local":
        return acquisition.LocalDirectoryProvider(images_root or p.root, p.path_template)
    if p.kind == "http":
        if not p.url_template:
            raise UsageError("provider.kind is 'http' but provider.url_template is empty")
        return acquisition.HttpTemplateProvider(p.url_template, p.api_key_env, p.timeout_s)
    raise UsageError(f"unknown provider kind {p.kind!r}")


def stage_fetch(cfg: Config, manifest_path, out: Path, jobs: int, images_root=None,
                store=None) -> Path:
    manifest_path = _require(manifest_path, "manifest")
    entries = acquisition.read_manifest(manifest_path)
    provider = make_provider(cfg, images_root)
    store = Path(store) if store else out / "store"
    parallel = max(1, min(cfg.provider.parallelism, jobs))
    entries = acquisition.fetch(entries, provider, store, parallel,
                                cfg.provider.max_requests_per_second)
    path = out / "manifest.jsonl"
    acquisition.write_manifest(path, entries)
    _write_csv(out / "fetch_log.csv", ["point_id", "camera_label", "reason"],
               ([e.point_id, e.camera_label, e.reason] for e in entries
                if e.status == acquisition.SKIPPED))
    return path


def stage_sky(cfg: Config, manifest_path, out: Path, jobs: int, store=None,
              skyprints=None) -> Path:
    entries = acquisition.read_manifest(_require(manifest_path, "manifest"))
    store = Path(store) if store else out / "store"
    want = cfg.report.write_skyprints if skyprints is None else skyprints
    tasks, skipped = [], []
    for e in entries:
        if e.camera_label != "sky":
            continue
        if e.status != acquisition.FETCHED:
            skipped.append((e.point_id, e.reason or e.status))
            continue
        seg = replace(cfg.segmentation, seed=derive_seed(cfg.seed, "sky", e.point_id))
        tasks.append((e.point_id, str(store / e.image), seg, want))
    scores, prints = [], []
    for pid, score, reason, png in _map_jobs(_sky_task, tasks, jobs):
        if score is None:
            logger.warning("sky image for point %s skipped: %s", pid, reason)
            skipped.append((pid, reason))
            continue
        scores.append(score)
        if png is not None:
            prints.append((pid, acquisition.store_image(out / "skyprints", png)))
    scores.sort(key=lambda s: s.point_id)
    path = out / "sky_scores.csv"
    _write_csv(path, ["point_id", "percent", "sky_pixels", "total_pixels"],
               ([s.point_id, repr(s.percent), s.sky_pixels, s.total_pixels] for s in scores))
    _write_csv(out / "sky_log.csv", ["point_id", "reason"], sorted(skipped))
    if want:
        _write_csv(out / "skyprints.csv", ["point_id", "path"], sorted(prints))
    return path


def stage_colors(cfg: Config, manifest_path, out: Path, jobs: int, store=None) -> Path:
    entries = acquisition.read_manifest(_require(manifest_path, "manifest"))
    store = Path(store) if store else out / "store"
    tasks, skipped = [], []
    for e in entries:
        if e.camera_label == "sky":
            continue
        if e.status != acquisition.FETCHED:
            skipped.append((e.point_id, e.camera_label, e.reason or e.status))
            continue
        km = replace(cfg.colors, seed=derive_seed(cfg.seed, "colors", e.point_id, e.camera_label))
        tasks.append((e.point_id, e.camera_label, str(store / e.image), km))
    rows = []
    for pid, label, cs, reason in _map_jobs(_colors_task, tasks, jobs):
        if cs is None:
            logger.warning("%s image for point %s skipped: %s", label, pid, reason)
            skipped.append((pid, label, reason))
            continue
        rows.extend(color_rows(cs))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    path = out / "colors.csv"
    _write_csv(path, COLORS_HEADER, rows)
    _write_csv(out / "colors_log.csv", ["point_id", "camera_label", "reason"], sorted(skipped))
    return path


def _read_color_sets(path: Path) -> dict:
    sets = {}
    for row in _read_csv(path, COLORS_HEADER):
        key = (int(row["point_id"]), row["camera_label"])
        rgb = (int(row["r"]), int(row["g"]), int(row["b"]))
        s = float(row["s"])
        hsb = HsbColor(float(row["h"]), s, float(row["b_val"]), s == 0.0)
        sets.setdefault(key, []).append((int(row["rank"]), ColorEntry(rgb, hsb, float(row["proportion"]))))
    return {k: DominantColorSet(k[0], k[1], tuple(e for _, e in sorted(v))) for k, v in sets.items()}


def stage_join(cfg: Config, points_path, scores_path, colors_path, listings_path, out: Path) -> dict:
    pts = _read_points(_require(points_path, "points"))
    scores = {int(r["point_id"]): float(r["percent"])
              for r in _read_csv(_require(scores_path, "sky scores"), ["point_id", "percent"])}
    color_sets = _read_color_sets(_require(colors_path, "colors"))
    listings = rent.load_listings(_require(listings_path, "listings"))

    primary = cfg.report.color_camera
    fallback = "right" if primary == "left" else "left"
    colors = {}
    for p in pts:
        colors[p.point_id] = color_sets.get((p.point_id, primary)) or color_sets.get((p.point_id, fallback))

    rents, excluded = rent.assign_rents(pts, rent.ListingIndex(listings), cfg.interpolation)
    records = rent.join_records(pts, scores, colors, rents)
    _write_csv(out / "records.csv", rent.RECORDS_HEADER, (rent.record_row(r) for r in records))
    _write_csv(out / "exclusions.csv", ["point_id", "reason", "detail"], excluded)
    series = rent.bin_mean_rent(records, cfg.report.score_bin_width)
    _write_csv(out / "binned.csv", ["bin", "mean_rent", "count"],
               ([b.bin, repr(b.mean_rent), b.count] for b in series))
    try:
        report = rent.correlation_report(records, cfg.report.score_bin_width)
    except DataError as exc:
        raise DataError(f"{out / 'records.csv'}: cannot compute correlations ({exc})") from exc
    _write_csv(out / "correlations.csv", ["metric", "value"],
               ([k, repr(v) if isinstance(v, float) else v] for k, v in report.items()))
    return report


def stage_report(cfg: Config, records_path, out: Path) -> None:
    rows = _read_csv(_require(records_path, "records"), rent.RECORDS_HEADER)
    records = [rent.record_from_row(r) for r in rows]
    rc = cfg.report
    hists = [rent.hue_histogram(records, rank, rc.hue_bin_width_deg) for rank in (1, 2, 3)]
    hist_rows = []
    for h in hists:
        for j, c in enumerate(h.counts):
            hist_rows.append([h.rank, f"{j * h.bin_width:g}", f"{(j + 1) * h.bin_width:g}", int(c)])
        hist_rows.append([h.rank, "achromatic", "", h.achromatic])
        hist_rows.append([h.rank, "missing", "", h.missing])
    _write_csv(out / "hue_histogram.csv", ["rank", "bin_start", "bin_end", "count"], hist_rows)

    series = rent.bin_mean_rent(records, rc.score_bin_width)
    (out / "rent_vs_sky.svg").write_text(svg.scatter_svg(
        [b.bin for b in series], [b.mean_rent for b in series],
        "Mean rent vs. sky visibility score", "sky visibility score (%)", "mean rent", xlim=(0.0, 100.0)))
    (out / "hue_histograms.svg").write_text(svg.histograms_svg(
        hists, ["first dominant colour", "second dominant colour", "third dominant colour"],
        "hue of dominant colours"))

    if records:
        grid = rent.hue_rent_density(records, rc.density_hue_bins, rc.density_rent_bins)
        dens_rows = []
        for i in range(grid.counts.shape[0]):
            for j in range(grid.counts.shape[1]):
                dens_rows.append([f"{grid.hue_edges[i]:g}", f"{grid.hue_edges[i + 1]:g}",
                                  repr(float(grid.rent_edges[j])), repr(float(grid.rent_edges[j + 1])),
                                  int(grid.counts[i, j])])
        _write_csv(out / "hue_rent_density.csv",
                   ["hue_start", "hue_end", "rent_start", "rent_end", "count"], dens_rows)
        (out / "hue_rent_density.svg").write_text(svg.heatmap_svg(
            grid, "First dominant hue vs. rent", "hue (degrees)", "rent"))


def stage_synth(cfg: Config, out_dir: Path):
    spec = replace(cfg.synth, seed=cfg.seed)
    city = gen_city(spec)
    city.write(out_dir)
    return city


def run_pipeline(cfg: Config, out: Path, jobs: int, synthetic: bool, wards=None, roads=None,
                 listings=None, images_root=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    if synthetic:
        sdir = out / "synth"
        stage_synth(cfg, sdir)
        wards, roads, listings = sdir / "wards.geojson", sdir / "roads.geojson", sdir / "listings.csv"
        images_root = sdir / "images"
        n = cfg.synth.points_per_ward
        cam = cfg.synth
        cfg = replace(cfg, cameras=replace(cfg.cameras, width_px=cam.sky_dims[0], height_px=cam.sky_dims[1]))
        if tuple(cam.sky_dims) != tuple(cam.sidewalk_dims):
            raise UsageError("synthetic pipeline needs synth.sky_dims == synth.sidewalk_dims")
        cfg = replace(cfg, provider=replace(cfg.provider, kind="local",
                                            path_template="{point_id}_{camera_label}.png"))
    else:
        n = None
        if not (wards and roads and listings):
            raise UsageError("pipeline needs --synthetic or all of --wards, --roads, --listings")
    points = stage_sample(cfg, wards, roads, out, n)
    manifest = stage_manifest(cfg, points, roads, out)
    stage_fetch(cfg, manifest, out, jobs, images_root)
    scores = stage_sky(cfg, manifest, out, jobs)
    colors = stage_colors(cfg, manifest, out, jobs)
    report = stage_join(cfg, points, scores, colors, listings, out)
    stage_report(cfg, out / "records.csv", out)
    return report


# -- argument parsing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="top-level seed (overrides config)")
    common.add_argument("--jobs", type=int, default=1, help="maximum worker count")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="skyrent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", parents=[common], help="sample and snap points per ward")
    p.add_argument("--wards", required=True)
    p.add_argument("--roads", required=True)
    p.add_argument("--n", type=int, help="points per ward (overrides config)")

    p = sub.add_parser("manifest", parents=[common], help="build the image manifest")
    p.add_argument("--points")
    p.add_argument("--roads", required=True)

    p = sub.add_parser("fetch", parents=[common], help="fetch images through the provider")
    p.add_argument("--manifest")
    p.add_argument("--images-root", help="local provider directory (overrides config)")
    p.add_argument("--store", help="content-addressed image store")

    p = sub.add_parser("sky", parents=[common], help="segment sky images and score them")
    p.add_argument("--manifest")
    p.add_argument("--store")
    p.add_argument("--skyprints", action="store_true", default=None, help="also write skyprint PNGs")

    p = sub.add_parser("colors", parents=[common], help="dominant colours of sidewalk images")
    p.add_argument("--manifest")
    p.add_argument("--store")

    p = sub.add_parser("join", parents=[common], help="assign rents and correlate")
    p.add_argument("--points")
    p.add_argument("--sky-scores")
    p.add_argument("--colors")
    p.add_argument("--listings", required=True)

    p = sub.add_parser("report", parents=[common], help="render CSV and SVG reports")
    p.add_argument("--records")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic city")

    p = sub.add_parser("pipeline", parents=[common], help="run every stage in order")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--wards")
    p.add_argument("--roads")
    p.add_argument("--listings")
    p.add_argument("--images-root")

    sub.add_parser("config", parents=[common], help="print the effective config as JSON")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cmd = args.command
        if cmd == "sample":
            stage_sample(cfg, args.wards, args.roads, out, args.n)
        elif cmd == "manifest":
            stage_manifest(cfg, args.points or out / "points.csv", args.roads, out)
        elif cmd == "fetch":
            stage_fetch(cfg, args.manifest or out / "manifest.jsonl", out, args.jobs,
                        args.images_root, args.store)
        elif cmd == "sky":
            stage_sky(cfg, args.manifest or out / "manifest.jsonl", out, args.jobs, args.store,
                      args.skyprints)
        elif cmd == "colors":
            stage_colors(cfg, args.manifest or out / "manifest.jsonl", out, args.jobs, args.store)
        elif cmd == "join":
            report = stage_join(cfg, args.points or out / "points.csv",
                                args.sky_scores or out / "sky_scores.csv",
                                args.colors or out / "colors.csv", args.listings, out)
            print(f"r_binned={report['r_binned']:.6f} r_raw={report['r_raw']:.6f}")
        elif cmd == "report":
            stage_report(cfg, args.records or out / "records.csv", out)
        elif cmd == "synth":
            stage_synth(cfg, out)
        elif cmd == "pipeline":
            report = run_pipeline(cfg, out, args.jobs, args.synthetic, args.wards, args.roads,
                                  args.listings, args.images_root)
            print(f"r_binned={report['r_binned']:.6f} r_raw={report['r_raw']:.6f}")
        elif cmd == "config":
            print(json.dumps(config_to_dict(cfg), indent=2))
    except UsageError as exc:
        print(f"skyrent: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"skyrent: data error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
