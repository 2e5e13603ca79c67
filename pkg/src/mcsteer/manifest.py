"""Run manifests and key=value config files.

Every command writes a small JSON manifest next to its outputs: the exact
command, resolved configuration, seeds, and SHA-256 of every input and
output file.  The manifest is where non-reproducible detail (wall-clock
time) is allowed to live; the artifacts themselves must be byte-identical
across reruns with the same seeds, and the recorded hashes make that
checkable after the fact.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

from .errors import ConfigError, DataFormatError


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    created_unix: float = field(default_factory=time.time)

    def add_input(self, path: str) -> None:
        self.inputs[path] = sha256_file(path)

    def add_output(self, path: str) -> None:
        self.outputs[path] = sha256_file(path)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.__dict__, f, indent=2, sort_keys=True)
            f.write("\n")


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; later keys override earlier ones."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise DataFormatError(f"cannot read config file {path}: {e}") from e
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


class ConfigReader:
    """Typed access over a string-keyed config dict with error context."""

    def __init__(self, values: dict[str, str], source: str = "config"):
        self.values = dict(values)
        self.source = source
        self._seen: set[str] = set()

    def _fetch(self, key: str, required: bool):
        self._seen.add(key)
        if key not in self.values:
            if required:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return None
        return self.values[key]

    def _typed(self, key: str, cast, typename: str, default, required: bool):
        raw = self._fetch(key, required)
        if raw is None:
            return default
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(
                f"{self.source}: key {key!r} expects {typename}, got {raw!r}") from None

    def get_int(self, key: str, default: int | None = None, required: bool = False) -> int:
        return self._typed(key, int, "an integer", default, required)

    def get_float(self, key: str, default: float | None = None, required: bool = False) -> float:
        return self._typed(key, float, "a number", default, required)

    def get_str(self, key: str, default: str | None = None, required: bool = False) -> str:
        raw = self._fetch(key, required)
        return default if raw is None else raw

    def get_ints(self, key: str, default: tuple[int, ...] | None = None,
                 required: bool = False) -> tuple[int, ...]:
        raw = self._fetch(key, required)
        if raw is None:
            return default
        try:
            return tuple(int(tok.strip()) for tok in raw.split(",") if tok.strip())
        except ValueError:
            raise ConfigError(
                f"{self.source}: key {key!r} expects comma-separated integers, got {raw!r}") from None

    def reject_unknown(self) -> None:
        unknown = set(self.values) - self._seen
        if unknown:
            raise ConfigError(f"{self.source}: unknown keys {sorted(unknown)}")
