"""Experiment configuration: JSON schema, strict validation, dotted overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .anchors import AnchorConfig
from .models import BackboneSpec, DEFAULT_STUDENT, DEFAULT_TEACHER
from .shapes_data import ShapesConfig
from .util import canonical_hash

__all__ = ["ConfigError", "DistillConfig", "ExperimentConfig", "load_config",
           "apply_overrides", "config_hash"]


class ConfigError(ValueError):
    """Invalid experiment configuration (a user error)."""


@dataclass(frozen=True)
class DistillConfig:
    """Training schedule and loss/optimizer settings shared by all runs."""

    num_classes: int = 3
    batch_size: int = 16
    teacher_epochs: int = 40
    stage1_epochs: int = 30            # adversarial + detection
    stage2_epochs: int = 15            # plain detection fine-tune (2:1 with stage 1)
    n_critic: int = 1                  # critic steps per generator step
    clip: float = 0.01                 # critic weight clamp
    critic_width: int = 64
    adam_lr: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_lr: float = 1e-3
    sgd_momentum: float = 0.9
    sgd_weight_decay: float = 5e-4
    pos_iou: float = 0.5
    neg_pos_ratio: int = 3
    variances: tuple[float, float, float, float] = (0.1, 0.1, 0.2, 0.2)
    score_thresh: float = 0.05
    nms_iou: float = 0.45
    top_k: int = 100
    checkpoint_every: int = 10

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigError("distill.batch_size must be >= 2")
        for name in ("teacher_epochs", "stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"distill.{name} must be >= 1")
        if self.n_critic < 1:
            raise ConfigError("distill.n_critic must be >= 1")
        if self.clip <= 0:
            raise ConfigError("distill.clip must be > 0")
        if not 0 < self.pos_iou < 1:
            raise ConfigError("distill.pos_iou must be in (0, 1)")
        if self.num_classes < 1:
            raise ConfigError("distill.num_classes must be >= 1")
        if len(self.variances) != 4 or any(v <= 0 for v in self.variances):
            raise ConfigError("distill.variances must be 4 positive floats")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs: data, architectures, schedule, paths, seeds."""

    data: ShapesConfig = field(default_factory=ShapesConfig)
    teacher: BackboneSpec = field(default_factory=lambda: DEFAULT_TEACHER)
    student: BackboneSpec = field(default_factory=lambda: DEFAULT_STUDENT)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    dataset_dir: str = "data/shapes1k"
    output_dir: str = "runs"
    seed: int = 1
    seeds: tuple[int, ...] = (1, 2, 3)

    def validate(self) -> None:
        self.data.validate()
        self.teacher.validate()
        self.student.validate()
        self.anchors.validate()
        self.distill.validate()
        if self.teacher.image_size != self.data.image_size:
            raise ConfigError("teacher.image_size must equal data.image_size")
        if self.student.image_size != self.data.image_size:
            raise ConfigError("student.image_size must equal data.image_size")
        if self.anchors.image_size != self.data.image_size:
            raise ConfigError("anchors.image_size must equal data.image_size")
        if list(self.anchors.grids) != self.teacher.emitted_sizes():
            raise ConfigError(
                f"anchors.grids {list(self.anchors.grids)} must match the emitted "
                f"feature sizes {self.teacher.emitted_sizes()}")
        if self.student.emitted_sizes() != self.teacher.emitted_sizes():
            raise ConfigError("student and teacher must emit the same spatial sizes")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "data": ShapesConfig,
    "teacher": BackboneSpec,
    "student": BackboneSpec,
    "anchors": AnchorConfig,
    "distill": DistillConfig,
}

_TUPLE_FIELDS = {"channels", "strides", "emit", "grids", "ratios", "variances", "seeds"}


def _coerce(name: str, value: Any) -> Any:
    if name == "sizes":                      # nested per-scale size lists
        return tuple(tuple(inner) for inner in value)
    if name in _TUPLE_FIELDS and isinstance(value, list):
        return tuple(value)
    return value


def _build_section(cls, section: str, payload: dict) -> Any:
    if not isinstance(payload, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {section!r}")
    return cls(**{k: _coerce(k, v) for k, v in payload.items()})


def from_dict(payload: dict) -> ExperimentConfig:
    """Build a validated config; unknown keys anywhere are rejected."""
    if not isinstance(payload, dict):
        raise ConfigError("experiment config must be a JSON object")
    top_known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(payload) - top_known
    if unknown:
        raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
    kwargs: dict[str, Any] = {}
    for name, value in payload.items():
        if name in _SECTIONS:
            kwargs[name] = _build_section(_SECTIONS[name], name, value)
        else:
            kwargs[name] = _coerce(name, value)
    try:
        config = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    return from_dict(payload)


def apply_overrides(payload: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` overrides onto a raw config dict.

    Values parse as JSON where possible (numbers, booleans, lists), else as
    literal strings.
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        keys = dotted.strip().lstrip("-").split(".")
        node = payload
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} traverses a non-object")
        node[keys[-1]] = value
    return payload


def config_hash(config: ExperimentConfig) -> str:
    return canonical_hash(config.to_dict())
