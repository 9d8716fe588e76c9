"""
Dreammap synth module. Provides synthetic empty/occupied environment pairs and datasets.

The empty map follows a log-distance path loss from a single access point plus spatially
correlated log-normal shadowing. The occupied map is the empty map with a Gaussian
attenuation bump subtracted per occupant, so occupancy is the only difference between
the two. Datasets are upscaled with `bilinear_upscale` and normalized to [0, 1] with
the dBm range of both maps of a pair, recorded in the pair metadata.
"""


import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, DataError
from .grid import EnvironmentPair, GridMap, PairMeta, Unit
from .mapio import MapFormatError, load_map, load_pair, save_pair
from .resample import SCALE_FACTORS, bilinear_upscale

logger = logging.getLogger(__name__)

MIN_DISTANCE = 0.5


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic environment generator."""

    base_h: int = 9
    base_w: int = 11
    ap_location: tuple = (4.0, 5.0)
    tx_ref_dbm: float = -30.0
    path_loss_exp: float = 2.2
    shadowing_sigma_dbm: float = 2.0
    correlation_len_cells: float = 1.5
    n_occupants: int = 8
    occupant_atten_db: float = 6.0
    occupant_radius_cells: float = 1.5
    seed: int = 0

    def validate(self):
        if self.base_h < 2 or self.base_w < 2:
            raise ConfigError(f"base grid must be at least 2x2, got {self.base_h}x{self.base_w}")
        if len(self.ap_location) != 2:
            raise ConfigError("ap_location must be a (row, col) pair")
        row, col = self.ap_location
        if not (0.0 <= row <= self.base_h - 1 and 0.0 <= col <= self.base_w - 1):
            raise ConfigError(f"ap_location {self.ap_location} outside the grid")
        if self.path_loss_exp <= 0.0:
            raise ConfigError("path_loss_exp must be positive")
        if self.shadowing_sigma_dbm < 0.0 or self.occupant_atten_db < 0.0:
            raise ConfigError("shadowing sigma and occupant attenuation must be non-negative")
        if self.correlation_len_cells <= 0.0 or self.occupant_radius_cells <= 0.0:
            raise ConfigError("correlation length and occupant radius must be positive")
        if self.n_occupants < 0:
            raise ConfigError("n_occupants must be non-negative")

        return self

    def to_dict(self):
        data = asdict(self)
        data["ap_location"] = list(self.ap_location)

        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "ap_location" in data:
            data["ap_location"] = tuple(float(v) for v in data["ap_location"])

        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(f"invalid synth config: {exc}") from exc


def _shadowing(rng, shape, sigma, corr_len):
    noise = rng.standard_normal(shape)

    if sigma == 0.0:
        return np.zeros(shape)

    field = gaussian_filter(noise, sigma=corr_len, mode="reflect")
    std = field.std()

    return field * (sigma / std) if std > 0.0 else np.zeros(shape)


def _occupant_centres(rng, config):
    def axis(length, n):
        lo, hi = (1, length - 2) if length > 2 else (0, length - 1)
        return rng.integers(lo, hi + 1, size=n)

    rows = axis(config.base_h, config.n_occupants)
    cols = axis(config.base_w, config.n_occupants)

    return list(zip(rows.tolist(), cols.tolist()))


def synth_pair(config):
    """Generate one dBm pair. The pair is a pure function of the config, seed included."""

    config.validate()
    rng = np.random.default_rng(config.seed)
    shape = (config.base_h, config.base_w)

    rows, cols = np.indices(shape, dtype=np.float64)
    ap_row, ap_col = config.ap_location
    dist = np.maximum(np.hypot(rows - ap_row, cols - ap_col), MIN_DISTANCE)

    shadow = _shadowing(rng, shape, config.shadowing_sigma_dbm, config.correlation_len_cells)
    empty = config.tx_ref_dbm - 10.0 * config.path_loss_exp * np.log10(dist) + shadow

    occupied = empty.copy()
    two_r2 = 2.0 * config.occupant_radius_cells**2
    for occ_row, occ_col in _occupant_centres(rng, config):
        occupied -= config.occupant_atten_db * np.exp(-((rows - occ_row) ** 2 + (cols - occ_col) ** 2) / two_r2)

    return EnvironmentPair(
        GridMap(empty, Unit.DBM),
        GridMap(occupied, Unit.DBM),
        PairMeta(source="synthetic", seed=config.seed),
    )


def normalize_pair(pair):
    """Map a dBm pair affinely onto [0, 1] using the joint range of both maps."""

    if pair.unit is not Unit.DBM:
        raise DataError("normalize_pair requires a dBm pair")

    dbm_min = float(min(pair.empty.values.min(), pair.occupied.values.min()))
    dbm_max = float(max(pair.empty.values.max(), pair.occupied.values.max()))
    if not dbm_min < dbm_max:
        raise DataError(f"cannot normalize a constant pair (all values {dbm_min} dBm)")

    span = dbm_max - dbm_min

    def norm(grid_map):
        return GridMap(np.clip((grid_map.values - dbm_min) / span, 0.0, 1.0), Unit.NORMALIZED)

    return EnvironmentPair(
        norm(pair.empty),
        norm(pair.occupied),
        replace(pair.meta, dbm_min=dbm_min, dbm_max=dbm_max),
    )


def denormalize_map(grid_map, meta):
    """Convert a normalized map (bounded or not) back to dBm with a pair's recorded range."""

    if grid_map.unit is not Unit.NORMALIZED:
        raise DataError("denormalize_map requires a normalized map")

    return GridMap(grid_map.values * (meta.dbm_max - meta.dbm_min) + meta.dbm_min, Unit.DBM)


def denormalize_pair(pair):
    """Inverse of `normalize_pair`."""

    return EnvironmentPair(
        denormalize_map(pair.empty, pair.meta),
        denormalize_map(pair.occupied, pair.meta),
        replace(pair.meta, dbm_min=None, dbm_max=None),
    )


def derive_seed(root_seed, index):
    """Distinct 64-bit seed for the index-th pair of a dataset."""

    seq = np.random.SeedSequence(root_seed, spawn_key=(index,))

    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _prepare(pair, scale, split):
    pair = EnvironmentPair(
        bilinear_upscale(pair.empty, scale),
        bilinear_upscale(pair.occupied, scale),
        replace(pair.meta, scale=scale, split=split),
    )

    return normalize_pair(pair)


def make_dataset(config, n_train, n_eval, scale):
    """Generate `n_train + n_eval` upscaled, normalized pairs; the first `n_train` are training pairs."""

    if n_train < 1 or n_eval < 1:
        raise ConfigError("a dataset needs at least one training and one evaluation pair")
    if scale not in SCALE_FACTORS:
        raise ConfigError(f"unsupported scale factor {scale}, expected one of {SCALE_FACTORS}")

    pairs = []
    for index in range(n_train + n_eval):
        split = "train" if index < n_train else "eval"
        raw = synth_pair(replace(config, seed=derive_seed(config.seed, index)))
        pairs.append(_prepare(raw, scale, split))

    logger.info("generated %d pairs (%d train, %d eval) at scale %d", len(pairs), n_train, n_eval, scale)

    return pairs


def ingest_pair(empty_path, occupied_path, scale=1, split="eval"):
    """Build a dataset pair from externally measured dBm REMAP files."""

    empty = load_map(empty_path)
    occupied = load_map(occupied_path)
    if empty.unit is not Unit.DBM or occupied.unit is not Unit.DBM:
        raise MapFormatError("ingested maps must be in dBm")

    return _prepare(EnvironmentPair(empty, occupied, PairMeta(source="dataset")), scale, split)


def write_dataset(directory, pairs, config=None, scale=1):
    """Write pair files and a manifest into a dataset directory."""

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    entries = []
    for index, pair in enumerate(pairs):
        name = f"pair{index:03d}.json"
        save_pair(directory / name, pair)
        entries.append({"path": name, "split": pair.meta.split})

    manifest = {
        "config": None if config is None else config.to_dict(),
        "scale": scale,
        "pairs": entries,
    }
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    logger.info("wrote dataset of %d pairs to %s", len(pairs), directory)

    return manifest_path


def load_dataset(directory):
    """Read a dataset directory; returns (train pairs, eval pairs, manifest)."""

    directory = Path(directory)

    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        entries = manifest["pairs"]
    except FileNotFoundError as exc:
        raise DataError(f"no dataset manifest in {directory}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MapFormatError(f"malformed dataset manifest in {directory}: {exc}") from exc

    train, evaluation = [], []
    for entry in entries:
        pair = load_pair(directory / entry["path"])
        (train if entry.get("split") == "train" else evaluation).append(pair)

    return train, evaluation, manifest
