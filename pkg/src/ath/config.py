"""Run configuration: one JSON document plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .graph import MAX_PREDICTED_OBJECTS
from .ingest import IOU_MATCH, GraphRecipe

PATH_KEYS = (
    "vocab",
    "registry",
    "inventory",
    "annotations",
    "detections",
    "questions",
    "dev_questions",
    "predicted",
    "threshold_file",
    "gqa_grounding",
)
OPSEQ_SOURCES = ("gold", "processed", "predicted")


@dataclass(frozen=True)
class RunConfig:
    paths: Mapping[str, Path] = field(default_factory=dict)
    recipe: str = "oracle"
    opseq_source: str = "gold"
    threshold: float | None = None
    calibrate: bool = False
    workers: int = 1
    outputs: Mapping[str, Path] = field(default_factory=dict)
    seed: int = 1
    iou_threshold: float = IOU_MATCH
    max_objects: int = MAX_PREDICTED_OBJECTS

    def validate(self) -> "RunConfig":
        unknown = set(self.paths) - set(PATH_KEYS)
        if unknown:
            raise ConfigError(f"unknown path keys: {sorted(unknown)}")
        try:
            GraphRecipe.parse(self.recipe)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.opseq_source not in OPSEQ_SOURCES:
            raise ConfigError(f"opseq_source must be one of {OPSEQ_SOURCES}")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} outside [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0.0 <= self.iou_threshold < 1.0:
            raise ConfigError("iou_threshold must lie in [0, 1)")
        if self.max_objects < 1:
            raise ConfigError("max_objects must be positive")
        return self

    def path(self, key: str, required: bool = True) -> Path | None:
        p = self.paths.get(key)
        if p is None and required:
            raise ConfigError(f"config has no '{key}' path")
        return p

    @property
    def graph_recipe(self) -> GraphRecipe:
        return GraphRecipe.parse(self.recipe)


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a config file (relative paths resolve against its directory)."""
    raw: dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be an object")
        base = p.parent
    raw = {k: v for k, v in raw.items() if k not in ("schema_version", "kind")}
    known = {f.name for f in fields(RunConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    paths = {k: base / v for k, v in raw.pop("paths", {}).items()}
    outputs = {k: base / v for k, v in raw.pop("outputs", {}).items()}
    try:
        cfg = RunConfig(paths=paths, outputs=outputs, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in PATH_KEYS:
            cfg = replace(cfg, paths={**cfg.paths, k: Path(v)})
        elif k in known:
            cfg = replace(cfg, **{k: v})
        else:
            raise ConfigError(f"unknown override {k!r}")
    return cfg.validate()
