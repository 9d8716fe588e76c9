"""
Dreammap config module. Provides flat `key = value` config files and worker thread sizing.

Config files hold one `key = value` per line; `#` starts a comment. Values are read as
int, float, bool (`true`/`false`), comma separated lists of those, or strings. Keys use
underscores and mirror the CLI flags (`pool_size` <-> `--pool-size`).
"""


import os
import re
from pathlib import Path

from .errors import ConfigError

THREADS_ENV = "DREAMMAP_THREADS"

_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")


def parse_value(text):
    """Typed value of a config token."""

    text = text.strip()

    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"

    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass

    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]

    return text


def parse_config(text, source="<config>"):
    """Dictionary of a flat config text."""

    values = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue

        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {line!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")

        values[key] = parse_value(value)

    return values


def load_config(path):
    """Dictionary of a flat config file."""

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    return parse_config(text, str(path))


def worker_threads(override=None):
    """Worker thread count: the override, else DREAMMAP_THREADS, with 0 meaning the CPU count."""

    if override is None:
        raw = os.environ.get(THREADS_ENV, "0")
        try:
            override = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc

    if override < 0:
        raise ConfigError("thread count must be non-negative")

    return override or os.cpu_count() or 1
