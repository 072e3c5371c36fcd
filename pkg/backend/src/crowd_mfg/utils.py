"""Exceptions and document parsing helpers."""

from pathlib import Path
from typing import Any

import toml
import yaml


class ConfigurationError(ValueError):
    """A scenario, grid or flag value is invalid."""


class CFLViolation(ConfigurationError):
    """Mass would travel farther than one cell in one time step."""

    def __init__(self, message: str, ratio: float | None = None):
        super().__init__(message)
        self.ratio = ratio


class SchemeError(RuntimeError):
    """A numerical invariant of the schemes was broken."""


def parse_document(text: str, fmt: str = "toml") -> dict[str, Any]:
    """Parse a TOML or YAML configuration document into a dict."""
    try:
        if fmt == "toml":
            data = toml.loads(text)
        elif fmt in ("yaml", "yml"):
            data = yaml.safe_load(text)
        else:
            raise ConfigurationError(f"unsupported document format '{fmt}'")
    except (toml.TomlDecodeError, yaml.YAMLError) as e:
        raise ConfigurationError(f"cannot parse {fmt} document: {e}") from e

    if not isinstance(data, dict):
        raise ConfigurationError("configuration document must be a table")
    return data


def read_document(path: str | Path) -> dict[str, Any]:
    """Read a configuration file, picking the parser from its suffix."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"configuration file not found: {path}")
    # anything that is not YAML (.toml, .cfg, no suffix) is read as TOML
    suffix = path.suffix.lower().lstrip(".")
    fmt = suffix if suffix in ("yaml", "yml") else "toml"
    return parse_document(path.read_text(encoding="utf-8"), fmt=fmt)
