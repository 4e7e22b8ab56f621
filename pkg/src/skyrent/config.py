"""Versioned JSON configuration.

A config file is a JSON object with ``schema_version`` and one optional
object per section. Missing keys take the defaults below; unknown keys are
rejected so typos do not silently fall back to defaults.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .colors import KMedoidsConfig
from .errors import UsageError
from .rent import InterpolationConfig
from .sky import SegmentationConfig
from .synth import CitySpec

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SamplingConfig:
    points_per_ward: int = 300


@dataclass(frozen=True)
class CameraConfig:
    width_px: int = 640
    height_px: int = 640
    sky_fov_deg: float = 120.0
    sidewalk_fov_deg: float = 60.0


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "local"
    root: str = "images"
    path_template: str = "{point_id}_{camera_label}.png"
    url_template: str = ""
    api_key_env: str = "SKYRENT_API_KEY"
    max_requests_per_second: Optional[float] = None
    parallelism: int = 4
    timeout_s: float = 10.0


@dataclass(frozen=True)
class ReportConfig:
    score_bin_width: float = 1.0
    hue_bin_width_deg: float = 5.0
    density_hue_bins: int = 36
    density_rent_bins: int = 20
    color_camera: str = "left"
    write_skyprints: bool = False


@dataclass(frozen=True)
class Config:
    seed: int = 0
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    cameras: CameraConfig = field(default_factory=CameraConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    colors: KMedoidsConfig = field(default_factory=KMedoidsConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    synth: CitySpec = field(default_factory=CitySpec)


_SECTIONS = {f.name: f.default_factory for f in fields(Config) if f.name != "seed"}
# seeds inside sections are derived from the top-level seed, not configured
_DERIVED = {"segmentation": {"seed"}, "colors": {"seed"}, "synth": {"seed"}}


def _build(cls, data: dict, where: str):
    names = {f.name: f for f in fields(cls)}
    allowed = set(names) - _DERIVED.get(where, set())
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"config section {where!r}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config section {where!r}: {exc}") from exc


def config_from_dict(doc: dict) -> Config:
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise UsageError(f"unsupported config schema_version {version} (expected {SCHEMA_VERSION})")
    unknown = set(doc) - set(_SECTIONS) - {"schema_version", "seed"}
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    kwargs = {"seed": int(doc.get("seed", 0))}
    for name, factory in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise UsageError(f"config section {name!r} must be an object")
        kwargs[name] = _build(type(factory()), section, name)
    return Config(**kwargs)


def load_config(path) -> Config:
    if path is None:
        return Config()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(doc)


def config_to_dict(cfg: Config) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "seed": cfg.seed}
    for name in _SECTIONS:
        section = asdict(getattr(cfg, name))
        for k in _DERIVED.get(name, ()):
            section.pop(k, None)
        doc[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
    return doc
