"""Image manifest construction and provider-backed fetching.

A manifest is a list of :class:`ManifestEntry`, one per (point, camera). It
serialises to JSON Lines. Fetching resolves pending entries through a
provider; anything a provider cannot deliver becomes a *skipped* entry with a
reason, which downstream stages simply leave out.
"""

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .errors import DataError, MalformedImage, ProviderUnreachable
from .geo import RoadNetwork, segment_bearing
from .imaging import decode, encode

logger = logging.getLogger(__name__)

CAMERA_LABELS = ("sky", "left", "right")
PENDING, FETCHED, SKIPPED = "pending", "fetched", "skipped"


@dataclass(frozen=True)
class CameraSpec:
    """Camera pose for one view.

    Either ``heading_deg`` is set (absolute compass heading) or
    ``relative_offset`` is +90/-90, meaning perpendicular to the road the
    point was snapped to.
    """

    label: str
    pitch_deg: float
    fov_deg: float
    width_px: int
    height_px: int
    heading_deg: Optional[float] = None
    relative_offset: Optional[int] = None

    def __post_init__(self):
        if self.heading_deg is None and self.relative_offset is None:
            raise ValueError("camera needs heading_deg or relative_offset")
        if self.heading_deg is not None and not 0 <= self.heading_deg < 360:
            raise ValueError("heading_deg must be in [0, 360)")
        if self.relative_offset is not None and self.relative_offset not in (90, -90):
            raise ValueError("relative_offset must be +90 or -90")
        if not -90 <= self.pitch_deg <= 90:
            raise ValueError("pitch_deg must be in [-90, 90]")
        if not 0 < self.fov_deg <= 120:
            raise ValueError("fov_deg must be in (0, 120]")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be positive")


def sky_camera(width: int = 640, height: int = 640, fov: float = 120.0) -> CameraSpec:
    return CameraSpec("sky", 90.0, fov, width, height, heading_deg=0.0)


def sidewalk_cameras(width: int = 640, height: int = 640, fov: float = 60.0) -> list:
    return [
        CameraSpec("left", 0.0, fov, width, height, relative_offset=-90),
        CameraSpec("right", 0.0, fov, width, height, relative_offset=90),
    ]


def default_cameras(width: int = 640, height: int = 640, sky_fov: float = 120.0,
                    sidewalk_fov: float = 60.0) -> list:
    return [sky_camera(width, height, sky_fov), *sidewalk_cameras(width, height, sidewalk_fov)]


@dataclass(frozen=True)
class ManifestEntry:
    point_id: int
    camera_label: str
    lon: float
    lat: float
    heading_deg: float
    pitch_deg: float
    fov_deg: float
    width_px: int
    height_px: int
    source: str = ""
    status: str = PENDING
    image: str = ""
    reason: str = ""


def build_manifest(points: list, specs: list, net: RoadNetwork) -> list:
    """One pending entry per (point, camera), with headings made absolute."""
    proj = net.projection() if specs and points else None
    out = []
    for p in points:
        bearing = None
        for spec in specs:
            if spec.relative_offset is not None:
                if bearing is None:
                    road = net.road(p.road_id)
                    a = road.vertices[p.segment_index]
                    b = road.vertices[p.segment_index + 1]
                    bearing = segment_bearing(a, b, proj)
                heading = (bearing + spec.relative_offset) % 360.0
            else:
                heading = float(spec.heading_deg)
            out.append(ManifestEntry(
                p.point_id, spec.label, p.snapped[0], p.snapped[1], heading,
                spec.pitch_deg, spec.fov_deg, spec.width_px, spec.height_px,
            ))
    return out


def manifest_to_jsonl(entries: list) -> str:
    return "".join(json.dumps(asdict(e)) + "\n" for e in entries)


def manifest_from_jsonl(text: str, path: str = "<manifest>") -> list:
    names = {f.name for f in fields(ManifestEntry)}
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        unknown = set(row) - names
        if unknown:
            raise DataError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
        try:
            out.append(ManifestEntry(**row))
        except TypeError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def read_manifest(path) -> list:
    return manifest_from_jsonl(Path(path).read_text(), str(path))


def write_manifest(path, entries: list) -> None:
    Path(path).write_text(manifest_to_jsonl(entries))


# -- providers ----------------------------------------------------------------

class FetchSkip(Exception):
    """Raised by a provider when one entry cannot be delivered."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class LocalDirectoryProvider:
    """Reads images from ``root`` using a ``{point_id}``/``{camera_label}`` template."""

    def __init__(self, root, template: str = "{point_id}_{camera_label}.png"):
        self.root = Path(root)
        self.template = template

    def check(self) -> None:
        if not self.root.is_dir():
            raise ProviderUnreachable(f"image directory {self.root} does not exist")

    def locate(self, entry: ManifestEntry) -> str:
        return self.template.format(point_id=entry.point_id, camera_label=entry.camera_label)

    def get(self, entry: ManifestEntry) -> bytes:
        path = self.root / self.locate(entry)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise FetchSkip("missing_file") from None
        except OSError as exc:
            raise FetchSkip(f"unreadable:{exc.__class__.__name__}") from None


class HttpTemplateProvider:
    """GETs ``template`` formatted with the entry's pose.

    Placeholders: ``{lat} {lon} {heading} {pitch} {fov} {width} {height}`` and
    optionally ``{key}``, read from the environment variable ``api_key_env``.
    The key is substituted only at request time and never stored.
    """

    def __init__(self, template: str, api_key_env: Optional[str] = None, timeout: float = 10.0):
        self.template = template
        self.api_key_env = api_key_env
        self.timeout = timeout

    def check(self) -> None:
        if "{key}" in self.template and not os.environ.get(self.api_key_env or ""):
            raise ProviderUnreachable(
                f"URL template needs an API key but ${self.api_key_env} is not set")

    def locate(self, entry: ManifestEntry, key: str = "{key}") -> str:
        return self.template.format(
            lat=repr(entry.lat), lon=repr(entry.lon), heading=f"{entry.heading_deg:g}",
            pitch=f"{entry.pitch_deg:g}", fov=f"{entry.fov_deg:g}",
            width=entry.width_px, height=entry.height_px, key=key,
        )

    def get(self, entry: ManifestEntry) -> bytes:
        key = os.environ.get(self.api_key_env, "") if self.api_key_env else ""
        url = self.locate(entry, key=key)
        try:
            with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            raise FetchSkip(f"http_{exc.code}") from None
        except (urllib.error.URLError, ConnectionError, TimeoutError) as exc:
            raise ProviderUnreachable(f"cannot reach {self.locate(entry)}: {exc}") from None


class RateLimiter:
    def __init__(self, max_per_second: Optional[float]):
        self.interval = 1.0 / max_per_second if max_per_second else 0.0
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next)
            self._next = slot + self.interval
        delay = slot - now
        if delay > 0:
            time.sleep(delay)


def store_image(store_dir, png: bytes) -> str:
    """Write ``png`` under its SHA-256 and return the store-relative path."""
    digest = hashlib.sha256(png).hexdigest()
    rel = f"{digest[:2]}/{digest}.png"
    path = Path(store_dir) / rel
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_bytes(png)
        os.replace(tmp, path)
    return rel


def _fetch_one(entry: ManifestEntry, provider, store_dir, limiter: RateLimiter) -> ManifestEntry:
    source = provider.locate(entry)
    limiter.wait()
    try:
        data = provider.get(entry)
    except FetchSkip as skip:
        return replace(entry, source=source, status=SKIPPED, reason=skip.reason)
    try:
        img = decode(data)
    except MalformedImage:
        return replace(entry, source=source, status=SKIPPED, reason="undecodable")
    if (img.width, img.height) != (entry.width_px, entry.height_px):
        return replace(entry, source=source, status=SKIPPED,
                       reason=f"dimension_mismatch_{img.width}x{img.height}")
    rel = store_image(store_dir, encode(img))
    return replace(entry, source=source, status=FETCHED, image=rel, reason="")


def fetch(manifest: list, provider, store_dir, parallelism: int = 1,
          max_requests_per_second: Optional[float] = None) -> list:
    """Resolve every pending entry; returns a new manifest in the same order.

    Already fetched or skipped entries are left untouched, so a completed
    manifest costs no requests.
    """
    pending = [i for i, e in enumerate(manifest) if e.status == PENDING]
    if not pending:
        return list(manifest)
    provider.check()
    Path(store_dir).mkdir(parents=True, exist_ok=True)
    limiter = RateLimiter(max_requests_per_second)
    out = list(manifest)

    def work(i):
        return i, _fetch_one(manifest[i], provider, store_dir, limiter)

    if parallelism <= 1:
        results = map(work, pending)
        for i, entry in results:
            out[i] = entry
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            for i, entry in pool.map(work, pending):
                out[i] = entry
    for e in out:
        if e.status == SKIPPED and e.reason:
            logger.info("skipped point %s/%s: %s", e.point_id, e.camera_label, e.reason)
    return out
