"""Pipeline configuration: one document, JSON on disk, flags override file.

The same structure backs the library entry points, the HTTP service (via its
pydantic mirror) and the CLI.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Any

from .drise import MaskSpec
from .errors import ConfigError
from .explain import SearchConfig
from .tracking import TrackerConfig


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "synthetic:rectangle"
    # synthetic:rectangle
    color: tuple[int, int, int] = (200, 60, 60)
    class_id: int = 0
    theta: float = 0.5
    expected_area: int = 0
    # synthetic:topk
    pixels: tuple[tuple[int, int], ...] = ()
    k: int = 1
    # cmd
    command: str | None = None  # falls back to $INCX_DETECTOR_CMD


@dataclass(frozen=True)
class MetricsConfig:
    enabled: bool = True
    steps: int = 100
    curves: bool = False        # insertion/deletion need many detector calls
    compare_drise: bool = False


@dataclass(frozen=True)
class OutputConfig:
    fields: bool = True
    masks: bool = True
    overlays: bool = True
    include_timing: bool = True
    report_path: str | None = None  # default: <out>/report.ndjson
    csv_mirror: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    bootstrap: MaskSpec = field(default_factory=MaskSpec)
    search: SearchConfig = field(default_factory=SearchConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    mass_floor: float = 1e-6
    workers: int = 0
    baseline: str = "black"  # occlusion baseline; only black is implemented

    def validate(self) -> None:
        try:
            self.search.validate()
            self.tracker.validate()
            self.bootstrap.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not (0.0 < self.bootstrap.p <= 1.0):
            raise ConfigError(
                f"bootstrap keep probability {self.bootstrap.p} outside (0, 1]")
        if self.metrics.steps < 2:
            raise ConfigError(f"metric steps must be >= 2, got {self.metrics.steps}")
        if self.mass_floor <= 0.0:
            raise ConfigError(f"mass floor {self.mass_floor} must be positive")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.baseline != "black":
            raise ConfigError(
                f"unsupported occlusion baseline {self.baseline!r}; "
                f"only 'black' is implemented")


def _take(data: dict, cls_name: str, allowed: set[str]) -> dict:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {cls_name} keys: {sorted(unknown)}")
    return data


def config_from_dict(doc: dict[str, Any]) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    doc = dict(doc)

    det = dict(doc.pop("detector", {}))
    _take(det, "detector", {"kind", "color", "class_id", "theta",
                            "expected_area", "pixels", "k", "command"})
    detector = DetectorConfig(
        kind=str(det.get("kind", "synthetic:rectangle")),
        color=tuple(det.get("color", (200, 60, 60))),
        class_id=int(det.get("class_id", 0)),
        theta=float(det.get("theta", 0.5)),
        expected_area=int(det.get("expected_area", 0)),
        pixels=tuple(tuple(p) for p in det.get("pixels", ())),
        k=int(det.get("k", 1)),
        command=det.get("command"),
    )

    boot = dict(doc.pop("bootstrap", {}))
    _take(boot, "bootstrap", {"n_masks", "grid", "p", "seed"})
    bootstrap = MaskSpec(
        n_masks=int(boot.get("n_masks", 1000)),
        grid=tuple(boot.get("grid", (4, 4))),
        p=float(boot.get("p", 0.5)),
        seed=int(boot.get("seed", doc.get("seed", 0))),
    )

    srch = dict(doc.pop("search", {}))
    _take(srch, "search", {"levels_initial", "levels_update", "margin", "iou_match"})
    search = SearchConfig(
        levels_initial=int(srch.get("levels_initial", 32)),
        levels_update=int(srch.get("levels_update", 8)),
        margin=float(srch.get("margin", 0.1)),
        iou_match=float(srch.get("iou_match", 0.5)),
    )

    trk = dict(doc.pop("tracker", {}))
    _take(trk, "tracker", {"iou_min", "timeout", "measurement_noise",
                           "process_noise"})
    tracker = TrackerConfig(
        iou_min=float(trk.get("iou_min", 0.3)),
        timeout=int(trk.get("timeout", 5)),
        measurement_noise=tuple(
            float(x) for x in trk.get("measurement_noise",
                                      TrackerConfig().measurement_noise)),
        process_noise=tuple(
            float(x) for x in trk.get("process_noise",
                                      TrackerConfig().process_noise)),
    )

    met = dict(doc.pop("metrics", {}))
    _take(met, "metrics", {"enabled", "steps", "curves", "compare_drise"})
    metrics = MetricsConfig(
        enabled=bool(met.get("enabled", True)),
        steps=int(met.get("steps", 100)),
        curves=bool(met.get("curves", False)),
        compare_drise=bool(met.get("compare_drise", False)),
    )

    out = dict(doc.pop("output", {}))
    _take(out, "output", {"fields", "masks", "overlays", "include_timing",
                          "report_path", "csv_mirror"})
    output = OutputConfig(
        fields=bool(out.get("fields", True)),
        masks=bool(out.get("masks", True)),
        overlays=bool(out.get("overlays", True)),
        include_timing=bool(out.get("include_timing", True)),
        report_path=out.get("report_path"),
        csv_mirror=bool(out.get("csv_mirror", False)),
    )

    seed = int(doc.pop("seed", 0))
    mass_floor = float(doc.pop("mass_floor", 1e-6))
    workers = int(doc.pop("workers", 0))
    baseline = str(doc.pop("baseline", "black"))
    if doc:
        raise ConfigError(f"unknown config keys: {sorted(doc)}")

    cfg = PipelineConfig(detector=detector, bootstrap=bootstrap, search=search,
                         tracker=tracker, metrics=metrics, output=output,
                         seed=seed, mass_floor=mass_floor, workers=workers,
                         baseline=baseline)
    cfg.validate()
    return cfg


def load_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e
    try:
        return config_from_dict(doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value in {path}: {e}") from e


def apply_overrides(cfg: PipelineConfig, **overrides: Any) -> PipelineConfig:
    """Replace top-level or nested fields; used by the CLI flag layer."""
    nested = {}
    flat = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = value
        else:
            flat[key] = value
    for section, vals in nested.items():
        current = getattr(cfg, section)
        cfg = replace(cfg, **{section: replace(current, **vals)})
    if flat:
        cfg = replace(cfg, **flat)
    cfg.validate()
    return cfg
