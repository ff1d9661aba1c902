"""Flat TOML experiment configs: parse with defaults and overrides, emit back."""

from __future__ import annotations

import json
import sys
from dataclasses import fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import ConfigError
from .workflow import ExperimentConfig

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _base_type(annotation: str):
    ann = annotation.replace(" ", "")
    if ann.startswith("str"):
        return str
    return {"int": int, "float": float, "bool": bool, "list": list}[ann]


def coerce(key: str, value):
    """Check/convert one raw value for ``key``; strings from the command line are parsed."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _base_type(_FIELD_TYPES[key])
    if isinstance(value, str) and kind is not str:
        try:
            value = tomllib.loads(f"v = {value}")["v"]
        except tomllib.TOMLDecodeError:
            if kind is list:
                value = [v for v in value.split(",") if v.strip()]
            else:
                raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is list:
        if not isinstance(value, list):
            value = [value]
        try:
            value = [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a list of numbers") from None
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_config(path=None, overrides: dict | None = None) -> tuple[ExperimentConfig, list[str]]:
    """Resolve a config: documented defaults, then the file, then ``overrides``.

    Returns the config and the sorted list of keys left at their defaults.
    """
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config must be flat; table {nested[0]!r} not allowed")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {k: coerce(k, v) for k, v in raw.items()}
    cfg = ExperimentConfig(**values)
    defaulted = sorted(set(_FIELD_TYPES) - set(values))
    return cfg, defaulted


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return json.dumps(str(value))


def emit_config(cfg: ExperimentConfig) -> str:
    """Flat TOML for ``cfg``. ``None`` values are omitted (TOML has no null)."""
    lines = [f"{k} = {_toml_value(v)}" for k, v in cfg.to_dict().items() if v is not None]
    return "\n".join(lines) + "\n"


def annotation_of(key: str):
    return _base_type(_FIELD_TYPES[key])

