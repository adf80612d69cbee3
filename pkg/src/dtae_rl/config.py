"""Flat ``key = value`` configuration files.

One key per line, ``#`` starts a comment. Keys are :class:`TrainConfig`
field names; ``lambda`` and ``combine_mode`` are accepted as aliases.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import get_type_hints

from .exceptions import ConfigError
from .trainer import TrainConfig

ALIASES = {"lambda": "lam", "combine_mode": "combine", "clip_eps": "clip_eps_0", "eta": "eta_0", "lr": "lr_0"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def config_keys() -> list[str]:
    return [f.name for f in dataclasses.fields(TrainConfig)]


def canonical_key(key: str) -> str:
    key = key.strip()
    key = ALIASES.get(key, key)
    if key not in config_keys():
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(config_keys())}")
    return key


def parse_value(key: str, raw: str):
    key = canonical_key(key)
    kind = get_type_hints(TrainConfig)[key]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def parse_assignments(lines, source: str = "<overrides>") -> dict:
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, raw = line.split("=", 1)
        values[canonical_key(key)] = parse_value(key, raw)
    return values


PRESETS = {
    "spod": {},
    "ppo": {"algorithm": "ppo", "eta_0": 0.0, "estimator": "gae"},
    # synchronous actor-critic: one unclipped pass over the whole batch
    "a2c": {"eta_0": 0.0, "estimator": "gae", "clip": False, "epochs_per_batch": 1, "minibatch_size": 2048},
}


def load_config(path=None, overrides=(), preset: str | None = None) -> TrainConfig:
    """Preset, then the config file (optional), then ``key=value`` overrides."""
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        values.update(PRESETS[preset])
    if path is not None:
        values.update(parse_assignments(Path(path).read_text().splitlines(), str(path)))
    values.update(parse_assignments(overrides))
    return TrainConfig(**values)


def format_config(config: TrainConfig) -> str:
    lines = ["# dtae_rl training configuration"]
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_config(path, config: TrainConfig) -> None:
    Path(path).write_text(format_config(config))
