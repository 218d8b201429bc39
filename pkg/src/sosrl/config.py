"""Run configuration: defaults, config-file loading and overrides.

Precedence is overrides > config file > defaults. Overrides use dotted
keys ("trainer.lr=0.001"); values are parsed as JSON with a plain-string
fallback. An empty part set is the first-order baseline and forces the
inference iteration count to zero.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from sosrl.encoder import PART_TYPES, EncoderConfig
from sosrl.mfvi import DecodeConfig
from sosrl.model import TaggerConfig
from sosrl.trainer import TrainConfig

MODES = ("with_predicates", "without_predicates")


class ConfigError(ValueError):
    """Unusable configuration: unknown keys, bad values, missing paths."""


@dataclass
class Paths:
    train: str | None = None
    dev: str | None = None
    embeddings: str | None = None
    embeddings_dim: int = 100
    train_features: str | None = None
    dev_features: str | None = None
    model_dir: str | None = None


@dataclass
class RunConfig:
    seed: int = 1
    mode: str = "with_predicates"
    parts: list[str] = field(default_factory=lambda: list(PART_TYPES))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    tagger: TaggerConfig = field(default_factory=TaggerConfig)
    paths: Paths = field(default_factory=Paths)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        unknown = set(self.parts) - set(PART_TYPES)
        if unknown:
            raise ConfigError(f"unknown part type(s) {sorted(unknown)}; choose from {PART_TYPES}")
        if len(set(self.parts)) != len(self.parts):
            raise ConfigError("duplicate entries in parts")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        try:
            self.encoder.validate()
            self.decode.validate()
            self.trainer.validate()
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def apply_baseline_rule(self) -> None:
        # No second-order parts means nothing to iterate over.
        if not self.parts:
            self.decode.iterations = 0

    def to_json(self) -> dict:
        return asdict(self)


def _update_dataclass(obj: Any, data: dict, where: str) -> None:
    valid = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and not isinstance(current, type):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be an object")
            _update_dataclass(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)


def _apply_override(config: RunConfig, spec: str) -> None:
    key, sep, raw = spec.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {spec!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    target: Any = config
    parts = key.split(".")
    for seg in parts[:-1]:
        if not hasattr(target, seg):
            raise ConfigError(f"unknown config key {key!r}")
        target = getattr(target, seg)
        if not dataclasses.is_dataclass(target):
            raise ConfigError(f"config key {key!r} does not address a field")
    leaf = parts[-1]
    if not hasattr(target, leaf):
        raise ConfigError(f"unknown config key {key!r}")
    if dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigError(f"config key {key!r} addresses a section, not a value")
    setattr(target, leaf, value)


def load_run_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, optionally updated from a JSON file, then --set overrides."""
    config = RunConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from err
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level config must be an object")
        _update_dataclass(config, data, "")
    for spec in overrides or []:
        _apply_override(config, spec)
    config.apply_baseline_rule()
    config.validate()
    return config
