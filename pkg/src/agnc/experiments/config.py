"""Flat TOML configuration files for the benchmarks.

Every key sits at the top level.  Problems are reported as
``path:line: message`` so the offending line can be found directly.
"""

from __future__ import annotations

import dataclasses
import re
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from agnc.errors import ConfigurationError
from agnc.experiments.icp_bench import IcpBenchConfig
from agnc.experiments.linreg import LinRegConfig
from agnc.geometry.scene import SceneConfig


class ConfigError(ConfigurationError):
    """Invalid configuration file; the message carries the file and line."""


LINREG_KEYS = {
    "N": int,
    "n": int,
    "sigma": float,
    "outlier_rates": list,
    "trials": int,
    "tau": float,
    "methods": list,
    "seed": int,
    "outlier_scale": float,
    "threads": int,
}

SCENE_KEYS = {f"scene_{f.name}": f.name for f in dataclasses.fields(SceneConfig)}

ICP_KEYS = {
    "difficulties": list,
    "overlaps": list,
    "trials": int,
    "methods": list,
    "seed": int,
    "max_iterations": int,
    "cloud_p": str,
    "cloud_q": str,
    "ground_truth": list,
    "threads": int,
    "refresh_each_iteration": bool,
}


def _key_line(text: str, key: str) -> int:
    pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return 1


def _check_type(value, kind) -> bool:
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


def read_table(path) -> tuple[dict, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config file ({exc.strerror or exc})") from None
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else 1
        raise ConfigError(f"{path}:{line}: {exc}") from None
    return table, text


def _validated(path, table, text, keys):
    values, scene = {}, {}
    for key, value in table.items():
        line = _key_line(text, key)
        if isinstance(value, dict):
            raise ConfigError(f"{path}:{line}: tables are not supported, keep every key at top level")
        if key in SCENE_KEYS and keys is ICP_KEYS:
            field = SCENE_KEYS[key]
            if field == "sphere_radius":
                if not (isinstance(value, list) and len(value) == 2):
                    raise ConfigError(f"{path}:{line}: {key} must be a two-element list")
                value = tuple(float(v) for v in value)
            scene[field] = value
            continue
        if key not in keys:
            raise ConfigError(f"{path}:{line}: unknown key {key!r}")
        if not _check_type(value, keys[key]):
            raise ConfigError(f"{path}:{line}: {key} must be of type {keys[key].__name__}")
        values[key] = float(value) if keys[key] is float else value
    return values, scene


def _build(path, text, cls, values):
    try:
        return cls(**values)
    except (ConfigurationError, TypeError, ValueError) as exc:
        key = next((k for k in values if k in str(exc)), None)
        line = _key_line(text, key) if key else 1
        raise ConfigError(f"{path}:{line}: {exc}") from None


def load_linreg_config(path, **overrides) -> LinRegConfig:
    table, text = read_table(path)
    values, _ = _validated(path, table, text, LINREG_KEYS)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return _build(path, text, LinRegConfig, values)


def load_icp_config(path, **overrides) -> IcpBenchConfig:
    table, text = read_table(path)
    values, scene = _validated(path, table, text, ICP_KEYS)
    if scene:
        try:
            values["scene"] = SceneConfig(**scene)
        except TypeError as exc:
            raise ConfigError(f"{path}:1: {exc}") from None
    if "ground_truth" in values:
        values["ground_truth"] = tuple(float(v) for v in values["ground_truth"])
    for key in ("cloud_p", "cloud_q"):
        if key in values:
            values[key] = str((Path(path).parent / values[key]).resolve())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return _build(path, text, IcpBenchConfig, values)
