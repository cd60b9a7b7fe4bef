"""Flat ``key=value`` configuration files and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from pathlib import Path
from typing import Any, Mapping

from .engine import PRESETS, ExperimentConfig
from .errors import ConfigError

REQUIRED_KEYS = ("architecture", "strategy")
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_HINTS = typing.get_type_hints(ExperimentConfig)


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def _convert(key: str, raw: Any, hint) -> Any:
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    args = typing.get_args(hint)
    if type(None) in args:
        if raw.lower() in ("", "none", "null"):
            return None
        hint = next(a for a in args if a is not type(None))
    try:
        if hint is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
        if typing.get_origin(hint) is tuple:
            elem = typing.get_args(hint)[0]
            return tuple(elem(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(hint, '__name__', hint)}") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def resolve(
    file_values: Mapping[str, Any] | None = None,
    overrides: Mapping[str, Any] | None = None,
    preset: str | None = None,
) -> ExperimentConfig:
    """Layer defaults, preset, file values and overrides (later wins) into a validated config."""
    merged: dict[str, Any] = dict(file_values or {})
    merged.update(overrides or {})
    preset = merged.pop("preset", None) or preset
    unknown = sorted(k for k in merged if k not in _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        values.update(PRESETS[preset])
        values["architecture"] = "traditional"
    values.update({k: _convert(k, v, _HINTS[k]) for k, v in merged.items()})
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    return ExperimentConfig(**values).validate()


def load_file(path) -> dict[str, Any]:
    """Config values from a ``key=value`` file or the ``config`` block of a JSON manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            return dict(json.loads(text)["config"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: not a run manifest ({exc})") from None
    return parse_text(text, str(path))


def as_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cfg).items()}


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(as_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:10]


def write_manifest(path, cfg: ExperimentConfig, source: str | None, output_dir, artifacts) -> None:
    # json writes floats with repr(), which round-trips every 64-bit value.
    manifest = {
        "schema_version": 1,
        "config_source": source,
        "config": as_dict(cfg),
        "output_dir": str(output_dir),
        "artifacts": [str(a) for a in artifacts],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
