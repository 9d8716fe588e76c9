"""
Dreammap grid module. Provides the grid data model shared by every other module.

Cells are addressed by a single row-major index `i = r * W + c`. A `GridMap` is an
immutable H x W field of finite values tagged with a unit, a `MeasurementState` is the
evolving record of which cells of the occupied environment have been queried and what
was read there, and an `Observation` packs the empty reference map together with a
measurement state as the three channel input the world model consumes.
"""


import enum
import hashlib
from dataclasses import dataclass, field

import bencodepy
import numpy as np

from .errors import DataError


class Unit(enum.Enum):
    """Unit tag of a map; the value is the token used in REMAP files."""

    DBM = "dbm"
    NORMALIZED = "norm"


def cell_index(row, col, width):
    """Row-major index of cell (row, col) in a grid of the given width."""

    return row * width + col


def cell_coords(index, width):
    """(row, col) of a row-major cell index."""

    return divmod(index, width)


@dataclass(frozen=True, eq=False)
class GridMap:
    """
    Dense H x W field of RSSI values.

    The values are copied into a read-only float64 array on construction. Every value must
    be finite. Maps tagged `Unit.NORMALIZED` must also lie in [0, 1] unless constructed with
    `bounded=False`, which is how reconstructions from the (linear headed) decoder and the GP
    are tagged; their values are in normalized units but are not clipped.
    """

    values: np.ndarray
    unit: Unit = Unit.NORMALIZED
    bounded: bool = field(default=True, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)

        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"grid map must be a non-empty 2D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("grid map contains non-finite values")

        unit = Unit(self.unit)
        if unit is Unit.NORMALIZED and self.bounded and (values.min() < 0.0 or values.max() > 1.0):
            raise DataError("normalized grid map values must lie in [0, 1]")

        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit", unit)

    @classmethod
    def zeros(cls, shape, unit=Unit.NORMALIZED):
        """All-zero map of the given (H, W) shape."""

        return cls(np.zeros(shape), unit)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        """Number of cells, |Ω|."""

        return self.values.size

    @property
    def flat(self):
        """Row-major view of the values."""

        return self.values.reshape(-1)

    def __getitem__(self, index):
        if isinstance(index, tuple):
            return float(self.values[index])

        return float(self.flat[index])

    def with_values(self, values, bounded=None):
        """New map with the same unit holding the given values."""

        return type(self)(values, self.unit, self.bounded if bounded is None else bounded)

    def with_unit(self, unit, bounded=None):
        """Same values retagged with another unit; no conversion is applied."""

        return type(self)(self.values, unit, self.bounded if bounded is None else bounded)

    def __eq__(self, other):
        return (
            isinstance(other, GridMap)
            and self.unit is other.unit
            and self.shape == other.shape
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"GridMap({self.height}x{self.width}, unit={self.unit.value})"


class MeasurementState:
    """
    The visited set S_t, sparse value map V_t and binary mask M_t.

    Instances are never changed in place; `apply_measurement` returns the successor state,
    so a state handed to scoring code cannot be disturbed by it. Unvisited cells hold a
    literal 0 in the value map.
    """

    class DuplicateLocationError(DataError):
        """Raised when a cell is measured a second time."""

    class OutOfRangeError(DataError):
        """Raised when a cell index lies outside the grid."""

    def __init__(self, shape, unit=Unit.NORMALIZED, visited=(), values=None, mask=None):
        """Initialise state. Use `empty` for a fresh state; the other arguments are for successors."""

        height, width = shape
        self._shape = (int(height), int(width))
        self._unit = Unit(unit)
        self._visited = tuple(visited)
        self._values = np.zeros(self._shape) if values is None else values
        self._mask = np.zeros(self._shape) if mask is None else mask

        self._values.setflags(write=False)
        self._mask.setflags(write=False)

    @classmethod
    def empty(cls, shape, unit=Unit.NORMALIZED):
        """State at t = 0: nothing visited, V_0 = 0, M_0 = 0."""

        return cls(shape, unit)

    @property
    def shape(self):
        return self._shape

    @property
    def unit(self):
        return self._unit

    @property
    def size(self):
        return self._shape[0] * self._shape[1]

    @property
    def visited(self):
        """Visited cell indices in measurement order."""

        return self._visited

    @property
    def value_map(self):
        return GridMap(self._values, self._unit, bounded=False)

    @property
    def mask(self):
        return GridMap(self._mask, Unit.NORMALIZED)

    def measured_values(self):
        """Values read at the visited cells, in visiting order."""

        flat = self._values.reshape(-1)

        return np.array([flat[i] for i in self._visited], dtype=np.float64)

    def free_cells(self):
        """Unmeasured cell indices in ascending order."""

        return np.flatnonzero(self._mask.reshape(-1) == 0.0)

    def state_digest(self):
        """Digest of the complete state, used to prove that read-only code left it untouched."""

        return hashlib.sha256(
            bencodepy.encode(
                {
                    "shape": list(self._shape),
                    "unit": self._unit.value,
                    "visited": list(self._visited),
                    "values": self._values.tobytes(),
                    "mask": self._mask.tobytes(),
                }
            )
        ).digest()

    def __len__(self):
        return len(self._visited)

    def __repr__(self):
        return f"MeasurementState({self._shape[0]}x{self._shape[1]}, visited={list(self._visited)!r})"


def apply_measurement(state, loc, value):
    """Return the successor of `state` after reading `value` at cell `loc`."""

    loc = int(loc)

    if not 0 <= loc < state.size:
        raise MeasurementState.OutOfRangeError(f"cell {loc} outside grid of {state.size} cells")
    if loc in state.visited:
        raise MeasurementState.DuplicateLocationError(f"cell {loc} already measured")
    if not np.isfinite(value):
        raise DataError(f"non-finite measurement at cell {loc}")

    values = np.array(state.value_map.values)
    mask = np.array(state.mask.values)
    row, col = cell_coords(loc, state.shape[1])
    values[row, col] = value
    mask[row, col] = 1.0

    return MeasurementState(state.shape, state.unit, (*state.visited, loc), values, mask)


@dataclass(frozen=True)
class Observation:
    """The model input x_t = {Z_e, V_t, M_t}."""

    empty_ref: GridMap
    state: MeasurementState

    def __post_init__(self):
        if self.empty_ref.shape != self.state.shape:
            raise DataError(f"observation channel shapes differ: {self.empty_ref.shape} vs {self.state.shape}")

    @property
    def shape(self):
        return self.empty_ref.shape

    def channels(self):
        """(3, H, W) array of the empty reference, value map and mask channels."""

        return np.stack([self.empty_ref.values, self.state.value_map.values, self.state.mask.values])

    def unpack(self):
        """The three channels as maps: (Z_e, V_t, M_t)."""

        return self.empty_ref, self.state.value_map, self.state.mask


def make_observation(empty_ref, state):
    """Pack the empty reference map and the measurement state into an observation."""

    return Observation(empty_ref, state)


@dataclass(frozen=True)
class PairMeta:
    """Provenance of an environment pair."""

    source: str = "synthetic"
    seed: int = None
    scale: int = 1
    dbm_min: float = None
    dbm_max: float = None
    split: str = None

    def to_dict(self):
        return {
            "source": self.source,
            "seed": self.seed,
            "scale": self.scale,
            "dbm_min": self.dbm_min,
            "dbm_max": self.dbm_max,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                source=str(data["source"]),
                seed=None if data.get("seed") is None else int(data["seed"]),
                scale=int(data.get("scale", 1)),
                dbm_min=None if data.get("dbm_min") is None else float(data["dbm_min"]),
                dbm_max=None if data.get("dbm_max") is None else float(data["dbm_max"]),
                split=data.get("split"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed pair metadata: {exc}") from exc


@dataclass(frozen=True)
class EnvironmentPair:
    """Empty map Z_e (fully known) and occupied map Z_o (queryable pointwise) of one space."""

    empty: GridMap
    occupied: GridMap
    meta: PairMeta = PairMeta()

    def __post_init__(self):
        if self.empty.shape != self.occupied.shape:
            raise DataError(f"pair maps differ in shape: {self.empty.shape} vs {self.occupied.shape}")
        if self.empty.unit is not self.occupied.unit:
            raise DataError("pair maps differ in unit")
        if self.unit is Unit.NORMALIZED:
            if self.meta.dbm_min is None or self.meta.dbm_max is None or not self.meta.dbm_min < self.meta.dbm_max:
                raise DataError("normalized pair requires dbm_min < dbm_max in its metadata")

    @property
    def shape(self):
        return self.empty.shape

    @property
    def unit(self):
        return self.empty.unit

    def pair_digest(self):
        """Digest of both maps and the normalization range."""

        return hashlib.sha256(
            bencodepy.encode(
                {
                    "shape": list(self.shape),
                    "unit": self.unit.value,
                    "empty": self.empty.values.tobytes(),
                    "occupied": self.occupied.values.tobytes(),
                    "range": repr((self.meta.dbm_min, self.meta.dbm_max)),
                }
            )
        ).digest()


def _check_comparable(estimate, truth):
    if estimate.shape != truth.shape:
        raise DataError(f"map shapes differ: {estimate.shape} vs {truth.shape}")
    if estimate.unit is not truth.unit:
        raise DataError(f"map units differ: {estimate.unit.value} vs {truth.unit.value}")


def rmse(estimate, truth):
    """Root mean square error over all cells."""

    _check_comparable(estimate, truth)

    return float(np.sqrt(np.mean((estimate.values - truth.values) ** 2)))


def mae(estimate, truth):
    """Mean absolute error over all cells."""

    _check_comparable(estimate, truth)

    return float(np.mean(np.abs(estimate.values - truth.values)))
