"""Pipeline configuration: nested sections, JSON files and dotted overrides.

Precedence is defaults, then the JSON config file, then ``--section.key=value``
overrides.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass

from .chsolver import SolverConfig
from .errors import InputError
from .histseg import HARD_THRESHOLD, PEAK_RATIO, default_eps_soft
from .metrics import DEFAULT_MIN_OVERLAP
from .preprocess import PreprocessConfig


@dataclass
class HistsegConfig:
    eps_soft: float | None = None  # None: solver epsilon / 255
    hard_threshold: float = HARD_THRESHOLD
    peak_ratio: float = PEAK_RATIO


@dataclass
class MetricsConfig:
    min_overlap: float = DEFAULT_MIN_OVERLAP
    connectivity: int = 6


@dataclass
class IOConfig:
    volume: str | None = None
    mask: str | None = None
    gt: str | None = None
    out: str = "out"
    slices: bool = False


@dataclass
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    histseg: HistsegConfig = field(default_factory=HistsegConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    io: IOConfig = field(default_factory=IOConfig)

    def validate(self) -> None:
        self.preprocess.validate()
        self.solver.validate()
        if self.histseg.eps_soft is not None and not self.histseg.eps_soft > 0:
            raise InputError("histseg.eps_soft must be positive")
        if not 0 < self.histseg.peak_ratio < 1:
            raise InputError("histseg.peak_ratio must lie in (0, 1)")
        if not 0 <= self.histseg.hard_threshold <= 1:
            raise InputError("histseg.hard_threshold must lie in [0, 1]")
        if not 0 < self.metrics.min_overlap <= 1:
            raise InputError("metrics.min_overlap must lie in (0, 1]")
        if self.metrics.connectivity not in (6, 26):
            raise InputError("metrics.connectivity must be 6 or 26")

    def materialized(self) -> dict:
        """All settings with defaults resolved, suitable for an exact rerun."""
        doc = asdict(self)
        doc["solver"]["dt"] = self.solver.resolved_dt()
        if doc["histseg"]["eps_soft"] is None:
            doc["histseg"]["eps_soft"] = default_eps_soft(self.solver.epsilon)
        return doc

    def eps_soft(self) -> float:
        if self.histseg.eps_soft is None:
            return default_eps_soft(self.solver.epsilon)
        return self.histseg.eps_soft


def _coerce(current, raw, name):
    if isinstance(raw, str):
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
    else:
        value = raw
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        raise InputError(f"{name}: expected true/false, got {raw!r}")
    if isinstance(current, int) and isinstance(value, (int, float)) and float(value).is_integer():
        return int(value)
    if isinstance(current, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if current is None or isinstance(value, type(current)):
        return value
    if isinstance(current, str):
        return str(raw)
    raise InputError(f"{name}: cannot use {raw!r} here")


def set_path(cfg: PipelineConfig, dotted: str, raw) -> None:
    parts = dotted.split(".")
    if len(parts) != 2:
        raise InputError(f"override {dotted!r} must look like section.key")
    section, key = parts
    target = getattr(cfg, section, None)
    if not is_dataclass(target):
        raise InputError(f"unknown config section {section!r}")
    names = {f.name for f in fields(target)}
    if key not in names:
        raise InputError(f"unknown key {key!r} in section {section!r}")
    setattr(target, key, _coerce(getattr(target, key), raw, dotted))


def update_from_dict(cfg: PipelineConfig, doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise InputError("config document must be a JSON object")
    for section, values in doc.items():
        if not isinstance(values, dict):
            raise InputError(f"config section {section!r} must be an object")
        for key, value in values.items():
            set_path(cfg, f"{section}.{key}", value)
    return cfg


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        update_from_dict(cfg, doc)
    for dotted, raw in (overrides or {}).items():
        set_path(cfg, dotted, raw)
    cfg.validate()
    return cfg
