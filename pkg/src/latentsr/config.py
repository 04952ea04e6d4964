"""Flat ``key=value`` configuration files.

Blank lines and lines starting with ``#`` are ignored. Keys are matched
exactly against the fields of the target dataclass; anything else is a
:class:`ConfigError` that names the offending key.
"""

import dataclasses
import os

from .errors import ConfigError, ParameterError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key, raw, kind):
    try:
        if kind is bool:
            v = raw.strip().lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_kv(text, source="<config>"):
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in items:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
        items[key] = value
    return items


def load_config(cls, path=None, text=None):
    """Build a ``cls`` instance from a key=value file (or string)."""
    if text is None:
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise OSError(exc.errno, f"cannot read {path}: {exc.strerror}", os.fspath(path)) from exc
    source = os.fspath(path) if path is not None else "<config>"
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in parse_kv(text, source).items():
        if key not in fields:
            raise ConfigError(f"{source}: unknown configuration key {key}")
        default = fields[key].default
        kwargs[key] = _coerce(key, raw, type(default))
    try:
        return cls(**kwargs)
    except ParameterError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def dump_config(cfg):
    return "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))
