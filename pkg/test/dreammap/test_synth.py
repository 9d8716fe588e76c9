import json
from dataclasses import replace

import numpy as np
import pytest

from dreammap.errors import ConfigError, DataError
from dreammap.grid import EnvironmentPair, GridMap, PairMeta, Unit
from dreammap.mapio import save_map
from dreammap.synth import (
    SynthConfig,
    denormalize_pair,
    derive_seed,
    ingest_pair,
    load_dataset,
    make_dataset,
    normalize_pair,
    synth_pair,
    write_dataset,
)


def dbm_pair(empty, occupied):
    return EnvironmentPair(GridMap(empty, Unit.DBM), GridMap(occupied, Unit.DBM), PairMeta())


def test_defaults_validate():
    """Check the default config is valid and has the documented grid."""

    config = SynthConfig().validate()

    assert (config.base_h, config.base_w) == (9, 11)
    assert config.n_occupants == 8


@pytest.mark.parametrize(
    "changes",
    [
        {"base_h": 1},
        {"path_loss_exp": 0.0},
        {"shadowing_sigma_dbm": -1.0},
        {"occupant_atten_db": -1.0},
        {"correlation_len_cells": 0.0},
        {"occupant_radius_cells": 0.0},
        {"n_occupants": -1},
        {"ap_location": (20.0, 5.0)},
    ],
)
def test_invalid_configs(changes):
    """Check invalid configs raise ConfigError."""

    with pytest.raises(ConfigError):
        replace(SynthConfig(), **changes).validate()


def test_config_dict_round_trip():
    """Check to_dict and from_dict invert each other."""

    config = SynthConfig(seed=9, ap_location=(2.5, 3.0))

    assert SynthConfig.from_dict(json.loads(json.dumps(config.to_dict()))) == config


def test_no_occupants_means_identical_maps():
    """Check zero occupants leaves the occupied map equal to the empty map."""

    pair = synth_pair(SynthConfig(n_occupants=0, seed=4))

    assert np.array_equal(pair.empty.values, pair.occupied.values)


def test_single_occupant_centre_attenuation():
    """Check the occupied map at the occupant's centre is attenuated by exactly the configured amount."""

    config = SynthConfig(shadowing_sigma_dbm=0.0, n_occupants=1, seed=5)
    pair = synth_pair(config)
    diff = pair.empty.values - pair.occupied.values
    centre = np.unravel_index(np.argmax(diff), diff.shape)

    assert diff[centre] == pytest.approx(config.occupant_atten_db, abs=1e-9)


def test_determinism():
    """Check the same seed gives the same pair and another seed another pair."""

    a = synth_pair(SynthConfig(seed=1))
    b = synth_pair(SynthConfig(seed=1))
    c = synth_pair(SynthConfig(seed=2))

    assert a.empty == b.empty and a.occupied == b.occupied
    assert not (a.empty == c.empty and a.occupied == c.occupied)


@pytest.mark.parametrize("seed", range(10))
def test_occupants_only_attenuate(seed):
    """Check occupied <= empty everywhere."""

    pair = synth_pair(SynthConfig(seed=seed))

    assert np.all(pair.occupied.values <= pair.empty.values)


def test_radial_monotonicity_without_shadowing():
    """Check the empty map falls off with distance from the access point."""

    config = SynthConfig(shadowing_sigma_dbm=0.0)
    pair = synth_pair(config)
    rows, cols = np.indices(pair.shape)
    dist = np.hypot(rows - config.ap_location[0], cols - config.ap_location[1]).reshape(-1)
    order = np.argsort(dist, kind="stable")
    values = pair.empty.flat[order]
    sorted_dist = dist[order]

    for i in range(len(values) - 1):
        if sorted_dist[i] < sorted_dist[i + 1]:
            assert values[i] >= values[i + 1]


def test_normalize_endpoints_and_midpoint():
    """Check -90 maps to 0, -30 to 1 and -60 to 0.5."""

    pair = normalize_pair(dbm_pair([[-90.0, -60.0]], [[-30.0, -60.0]]))

    assert pair.unit is Unit.NORMALIZED
    assert pair.empty.values.tolist() == [[0.0, 0.5]]
    assert pair.occupied.values.tolist() == [[1.0, 0.5]]
    assert (pair.meta.dbm_min, pair.meta.dbm_max) == (-90.0, -30.0)


def test_normalize_round_trip():
    """Check denormalize inverts normalize within 1e-9."""

    pair = synth_pair(SynthConfig(seed=8))
    back = denormalize_pair(normalize_pair(pair))

    assert np.max(np.abs(back.empty.values - pair.empty.values)) <= 1e-9
    assert np.max(np.abs(back.occupied.values - pair.occupied.values)) <= 1e-9


def test_normalize_constant_pair():
    """Check a constant pair cannot be normalized."""

    with pytest.raises(DataError):
        normalize_pair(dbm_pair([[-50.0, -50.0]], [[-50.0, -50.0]]))


def test_make_dataset_split_and_shape():
    """Check 3 training and 1 evaluation pair of 9x11."""

    pairs = make_dataset(SynthConfig(seed=7), 3, 1, 1)

    assert len(pairs) == 4
    assert [p.meta.split for p in pairs] == ["train", "train", "train", "eval"]
    assert all(p.shape == (9, 11) and p.unit is Unit.NORMALIZED for p in pairs)
    assert len({p.meta.seed for p in pairs}) == 4


@pytest.mark.parametrize("scale, shape", [(4, (36, 44)), (16, (144, 176))])
def test_make_dataset_scales(scale, shape):
    """Check upscaled dataset shapes."""

    pairs = make_dataset(SynthConfig(), 1, 1, scale)

    assert all(p.shape == shape and p.meta.scale == scale for p in pairs)


def test_make_dataset_invalid_arguments():
    """Check invalid scales and splits raise."""

    with pytest.raises(ConfigError):
        make_dataset(SynthConfig(), 1, 1, 3)
    with pytest.raises(ConfigError):
        make_dataset(SynthConfig(), 0, 1, 1)


def test_make_dataset_is_pure():
    """Check dataset generation depends on its arguments only."""

    a = make_dataset(SynthConfig(seed=2), 2, 1, 2)
    b = make_dataset(SynthConfig(seed=2), 2, 1, 2)

    assert all(x.empty == y.empty and x.occupied == y.occupied and x.meta == y.meta for x, y in zip(a, b))


def test_derive_seed_distinct():
    """Check derived seeds differ per index."""

    assert len({derive_seed(0, i) for i in range(20)}) == 20


def test_dataset_directory_round_trip(tmp_path):
    """Check write_dataset then load_dataset, and that rewriting gives the same manifest."""

    config = SynthConfig(seed=7)
    pairs = make_dataset(config, 3, 1, 1)
    manifest_path = write_dataset(tmp_path / "a", pairs, config, 1)
    write_dataset(tmp_path / "b", make_dataset(config, 3, 1, 1), config, 1)

    train, evaluation, manifest = load_dataset(tmp_path / "a")

    assert len(train) == 3 and len(evaluation) == 1
    assert manifest["scale"] == 1
    assert SynthConfig.from_dict(manifest["config"]) == config
    assert manifest_path.read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_load_dataset_missing_manifest(tmp_path):
    """Check a directory without a manifest is a data error."""

    with pytest.raises(DataError):
        load_dataset(tmp_path)


def test_ingest_pair(tmp_path):
    """Check external dBm maps are upscaled, normalized and tagged as dataset pairs."""

    pair = synth_pair(SynthConfig(seed=1))
    save_map(tmp_path / "empty.remap", pair.empty)
    save_map(tmp_path / "occupied.remap", pair.occupied)

    ingested = ingest_pair(tmp_path / "empty.remap", tmp_path / "occupied.remap", scale=2)

    assert ingested.meta.source == "dataset"
    assert ingested.shape == (18, 22)
    assert ingested.unit is Unit.NORMALIZED


def test_ingest_rejects_normalized_maps(tmp_path):
    """Check ingestion needs dBm files."""

    save_map(tmp_path / "a.remap", GridMap.zeros((2, 2)))

    with pytest.raises(DataError):
        ingest_pair(tmp_path / "a.remap", tmp_path / "a.remap")
