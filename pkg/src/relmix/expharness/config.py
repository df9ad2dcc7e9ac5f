"""JSON experiment configs with line-precise error reporting."""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

from ..estimators import ConfigError

__all__ = ["HarnessConfigError", "ConfigSource", "load_config", "config_hash",
           "BASELINE", "ESTIMATORS", "SWEEP_PARAMS"]

# baseline instance parameters of the random-graph experiments
BASELINE = {"n_nodes": 50, "p_edge": 0.3, "p": 0.1, "alpha": 0.05, "beta_ratio": 5.0}

ESTIMATORS = ("wls", "ls", "lae", "lae_subgradient", "ls_em", "dist_ls_em")
SWEEP_PARAMS = ("p_edge", "p", "beta_ratio")


class HarnessConfigError(ConfigError):
    """Config problem; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ConfigSource:
    """Parsed config plus the raw text, for locating keys in error messages."""

    def __init__(self, data: dict, text: str = "", name: str = "<config>"):
        self.data = data
        self.text = text
        self.name = name

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        if m is None:
            return None
        return self.text.count("\n", 0, m.start()) + 1

    def error(self, key: str | None, message: str) -> HarnessConfigError:
        line = self.line_of(key) if key else None
        where = f"{self.name}:{line}" if line else self.name
        return HarnessConfigError(f"{where}: {message}", key)

    def check(self, section: dict, schema: dict, where: str = "") -> dict:
        """Reject unknown keys and wrongly typed values in ``section``."""
        if not isinstance(section, dict):
            raise self.error(where or None, f"{where or 'config'} must be a JSON object")
        for key, value in section.items():
            if key not in schema:
                raise self.error(key, f"unknown key {key!r}{' in ' + where if where else ''}; "
                                      f"expected one of {sorted(schema)}")
            kinds = schema[key]
            if not any(_is_kind(value, k) for k in kinds):
                raise self.error(key, f"{key!r} must be {' or '.join(kinds)}, got {value!r}")
        return section


def _is_kind(value, kind: str) -> bool:
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "string":
        return isinstance(value, str)
    if kind == "null":
        return value is None
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "object":
        return isinstance(value, dict)
    if kind == "numbers":
        return isinstance(value, list) and all(_is_kind(v, "number") for v in value)
    if kind == "strings":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    raise ValueError(kind)


def load_config(path) -> ConfigSource:
    """Read a JSON object from ``path``; syntax errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise HarnessConfigError(f"{path}: cannot read config ({exc.strerror})")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise HarnessConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise HarnessConfigError(f"{path}:1: top level must be a JSON object")
    return ConfigSource(data, text, str(path))


def config_hash(resolved: dict) -> str:
    """Short SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
