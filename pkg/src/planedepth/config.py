"""Pipeline configuration loaded from JSON; unknown keys are rejected."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass

from .errors import ParameterError
from .losses import LossWeights
from .refine import EIGHT_NEIGHBORS

SCHEMA_VERSION = 1


@dataclass
class FormatConfig:
    depth_scale: float = 256.0
    pfm_little_endian: bool = True


@dataclass
class GeometryConfig:
    window: int = 5
    sparse_window: int = 7


@dataclass
class SegmentationConfig:
    k: float = 1.0
    min_size: int = 32
    min_area: int = 200


@dataclass
class SpnSettings:
    alpha: float = 0.1
    sigma: float = 16.0
    iterations: int = 6
    offsets: list = field(default_factory=lambda: [list(o) for o in EIGHT_NEIGHBORS])


@dataclass
class SamplingConfig:
    n: int = 500
    seed: int = 0


@dataclass
class PipelineConfig:
    intrinsics: str | None = None
    formats: FormatConfig = field(default_factory=FormatConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    spn: SpnSettings = field(default_factory=SpnSettings)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ParameterError(f"config schema_version must be {SCHEMA_VERSION}, got {version!r}")
        return _build(cls, d, "config")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise ParameterError(f"bad config JSON: {e}") from None


def _build(cls, d, where: str):
    if not isinstance(d, dict):
        raise ParameterError(f"{where} must be an object")
    known = {f.name: f for f in fields(cls)}
    extra = set(d) - set(known)
    if extra:
        raise ParameterError(f"unknown keys in {where}: {sorted(extra)}")
    kwargs = {}
    for name, value in d.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)
