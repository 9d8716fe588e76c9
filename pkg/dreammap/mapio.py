"""
Dreammap map I/O module. Provides the REMAP v1 map file format and the pair JSON format.

A map file is UTF-8 text:

    REMAP v1
    H W unit
    <H lines of W space separated decimal floats>

where unit is `dbm` or `norm`. Values are written with `repr`, so a load after a save
reproduces every value exactly. A pair file is a JSON object holding the pair metadata
and the paths, relative to the pair file, of its empty and occupied map files.
"""


import json
import logging
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .grid import EnvironmentPair, GridMap, PairMeta, Unit

logger = logging.getLogger(__name__)

MAGIC = "REMAP v1"


class MapFormatError(DataError):
    """Raised for malformed map or pair files."""


def format_map(grid_map):
    """REMAP v1 text of a map."""

    lines = [MAGIC, f"{grid_map.height} {grid_map.width} {grid_map.unit.value}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in grid_map.values)

    return "\n".join(lines) + "\n"


def parse_map(text, bounded=True):
    """Parse REMAP v1 text into a map."""

    lines = [line for line in text.splitlines() if line.strip()]

    if not lines or lines[0].strip() != MAGIC:
        raise MapFormatError(f"missing {MAGIC!r} header")
    if len(lines) < 2:
        raise MapFormatError("missing dimension line")

    header = lines[1].split()
    if len(header) != 3:
        raise MapFormatError(f"malformed dimension line {lines[1]!r}")

    try:
        height, width = int(header[0]), int(header[1])
        unit = Unit(header[2])
    except ValueError as exc:
        raise MapFormatError(f"malformed dimension line {lines[1]!r}") from exc

    if height < 1 or width < 1:
        raise MapFormatError(f"invalid dimensions {height}x{width}")

    tokens = " ".join(lines[2:]).split()
    if len(tokens) != height * width:
        raise MapFormatError(f"declared {height}x{width} = {height * width} values, found {len(tokens)}")

    values = []
    for token in tokens:
        try:
            value = float(token)
        except ValueError as exc:
            raise MapFormatError(f"invalid value token {token!r}") from exc
        if not math.isfinite(value):
            raise MapFormatError(f"non-finite value token {token!r}")
        values.append(value)

    return GridMap(np.array(values).reshape(height, width), unit, bounded=bounded)


def save_map(path, grid_map):
    """Write a map to a REMAP v1 file."""

    Path(path).write_text(format_map(grid_map), encoding="utf-8")

    logger.debug("wrote map %s to %s", grid_map, path)


def load_map(path, bounded=True):
    """Read a map from a REMAP v1 file."""

    return parse_map(Path(path).read_text(encoding="utf-8"), bounded=bounded)


def save_pair(path, pair):
    """Write a pair JSON file and its two map files alongside it."""

    path = Path(path)
    stem = path.name[: -len(path.suffix)] if path.suffix else path.name
    empty_name = f"{stem}.empty.remap"
    occupied_name = f"{stem}.occupied.remap"

    save_map(path.parent / empty_name, pair.empty)
    save_map(path.parent / occupied_name, pair.occupied)

    doc = {"meta": pair.meta.to_dict(), "empty": empty_name, "occupied": occupied_name}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    logger.debug("wrote pair to %s", path)


def load_pair(path):
    """Read a pair JSON file and the map files it references."""

    path = Path(path)

    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        meta = doc["meta"]
        empty_name = doc["empty"]
        occupied_name = doc["occupied"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MapFormatError(f"malformed pair file {path}: {exc}") from exc

    return EnvironmentPair(
        load_map(path.parent / empty_name),
        load_map(path.parent / occupied_name),
        PairMeta.from_dict(meta),
    )
