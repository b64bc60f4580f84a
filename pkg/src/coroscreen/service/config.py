"""Service configuration from a TOML/JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


class ConfigError(Exception):
    pass


ENV_PREFIX = "COROSCREEN_"


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8320
    data_dir: str = "service-data"
    model_path: str | None = None
    threshold: float = 0.5

    def __post_init__(self):
        if not 1 <= int(self.port) <= 65535:
            raise ConfigError(f"port {self.port} outside [1, 65535]")
        if not 0.0 <= float(self.threshold) <= 1.0:
            raise ConfigError(f"threshold {self.threshold} outside [0, 1]")
        if not str(self.data_dir):
            raise ConfigError("data_dir must be non-empty")


_FIELD_TYPES = {"port": int, "data_dir": str, "model_path": str, "threshold": float}


def _coerce(name: str, value):
    try:
        return _FIELD_TYPES[name](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def load_config(path: str | Path | None = None, env=None) -> ServiceConfig:
    """File settings (by extension: .toml or .json), then env overrides
    COROSCREEN_PORT / _DATA_DIR / _MODEL_PATH / _THRESHOLD."""
    env = os.environ if env is None else env
    settings: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            if path.suffix == ".toml":
                raw = tomllib.loads(path.read_text())
            elif path.suffix == ".json":
                raw = json.loads(path.read_text())
            else:
                raise ConfigError(f"config {path} must be .toml or .json")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {path} does not parse: {exc}") from exc
        known = {f.name for f in fields(ServiceConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        settings.update({k: _coerce(k, v) for k, v in raw.items()})
    for name in _FIELD_TYPES:
        key = ENV_PREFIX + name.upper()
        if key in env:
            settings[name] = _coerce(name, env[key])
    return ServiceConfig(**settings)
