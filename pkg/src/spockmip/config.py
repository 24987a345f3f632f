"""YAML run-configuration parsing into the module config dataclasses.

Top-level keys: phantom, sampler, model, loss, train, inference. Unknown
keys anywhere are rejected, listing every offender.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .infer import InferenceConfig
from .losses import LossConfig, MipMode
from .model import ModelConfig, Variant
from .phantom import PhantomConfig
from .data import SamplerConfig
from .train import TrainConfig
from .volumes import Axis


class ConfigError(ValueError):
    pass


_TOP_LEVEL = {
    "phantom": PhantomConfig,
    "sampler": SamplerConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "inference": InferenceConfig,
}

# fields that need string -> enum/tuple coercion
_COERCERS = {
    ("model", "variant"): lambda v: Variant(v) if isinstance(v, str) else v,
    ("train", "mode"): lambda v: MipMode(v) if isinstance(v, str) else v,
    ("sampler", "mip_axes"): lambda v: tuple(
        Axis[a.upper()] if isinstance(a, str) else a for a in v
    ),
}

_TUPLE_FIELDS = {
    "dims", "stride", "radius_range", "cluster_size_range", "level_weights",
}


def _build_section(name: str, cls, raw: dict, errors: list[str], extra: dict | None = None):
    field_names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in field_names:
            errors.append(f"{name}.{key}: unknown key")
            continue
        coerce = _COERCERS.get((name, key))
        if coerce is not None:
            value = coerce(value)
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    if extra:
        kwargs.update(extra)
    return cls(**kwargs) if not errors else None


def load_run_config(path: str | Path) -> dict:
    """Parse a YAML run config into {section name: config dataclass}."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    errors = [f"{k}: unknown top-level key" for k in raw if k not in _TOP_LEVEL]
    sections: dict = {}
    for name, cls in _TOP_LEVEL.items():
        body = raw.get(name, {}) or {}
        if not isinstance(body, dict):
            errors.append(f"{name}: must be a mapping")
            continue
        if name == "train":
            continue  # built last: nests loss/sampler/model
        sections[name] = _build_section(name, cls, body, errors)
    if errors:
        raise ConfigError("invalid config: " + "; ".join(sorted(errors)))

    train_body = raw.get("train", {}) or {}
    nested = {
        "loss": sections["loss"] or LossConfig(),
        "sampler": sections["sampler"] or SamplerConfig(),
        "model": sections["model"] or ModelConfig(),
    }
    sections["train"] = _build_section("train", TrainConfig, train_body, errors, nested)
    if errors:
        raise ConfigError("invalid config: " + "; ".join(sorted(errors)))
    return sections
