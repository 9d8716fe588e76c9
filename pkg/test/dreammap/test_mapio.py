import json

import numpy as np
import pytest

from dreammap.grid import EnvironmentPair, GridMap, PairMeta, Unit
from dreammap.mapio import MapFormatError, format_map, load_map, load_pair, parse_map, save_map, save_pair
from dreammap.synth import SynthConfig, normalize_pair, synth_pair


@pytest.fixture
def seeded_pair():
    return normalize_pair(synth_pair(SynthConfig(seed=3)))


def test_golden_fixture(tmp_path):
    """Check a hand-written 2x2 file loads to its exact values."""

    path = tmp_path / "fixture.remap"
    path.write_text("REMAP v1\n2 2 dbm\n-40.5 -41\n-60.25 -70.125\n", encoding="utf-8")

    grid_map = load_map(path)

    assert grid_map.unit is Unit.DBM
    assert grid_map.values.tolist() == [[-40.5, -41.0], [-60.25, -70.125]]


def test_map_round_trip(tmp_path):
    """Check save then load reproduces a map and the file bytes."""

    grid_map = GridMap(np.random.default_rng(1).uniform(size=(9, 11)))
    save_map(tmp_path / "a.remap", grid_map)
    loaded = load_map(tmp_path / "a.remap")
    save_map(tmp_path / "b.remap", loaded)

    assert np.max(np.abs(loaded.values - grid_map.values)) <= 1e-9
    assert (tmp_path / "a.remap").read_bytes() == (tmp_path / "b.remap").read_bytes()


def test_value_count_mismatch():
    """Check a file declaring 9x11 with 98 values is refused."""

    text = "REMAP v1\n9 11 dbm\n" + " ".join(["-50.0"] * 98) + "\n"

    with pytest.raises(MapFormatError):
        parse_map(text)


@pytest.mark.parametrize(
    "text",
    [
        "REMAP v2\n1 1 dbm\n0.0\n",
        "REMAP v1\n1 1 watts\n0.0\n",
        "REMAP v1\n1 dbm\n0.0\n",
        "REMAP v1\n1 1 dbm\nnan\n",
        "REMAP v1\n1 1 dbm\ninf\n",
        "REMAP v1\n1 1 dbm\nabc\n",
        "",
    ],
)
def test_malformed_files(text):
    """Check malformed headers and tokens are refused."""

    with pytest.raises(MapFormatError):
        parse_map(text)


def test_unbounded_normalized_values():
    """Check out-of-range normalized values need an unbounded load."""

    text = format_map(GridMap([[1.25]], bounded=False))

    with pytest.raises(ValueError):
        parse_map(text)
    assert parse_map(text, bounded=False)[0] == 1.25


def test_pair_round_trip(tmp_path, seeded_pair):
    """Check a pair and its metadata survive save then load."""

    save_pair(tmp_path / "pair.json", seeded_pair)
    loaded = load_pair(tmp_path / "pair.json")

    assert loaded.meta == seeded_pair.meta
    assert np.max(np.abs(loaded.empty.values - seeded_pair.empty.values)) <= 1e-9
    assert np.max(np.abs(loaded.occupied.values - seeded_pair.occupied.values)) <= 1e-9

    doc = json.loads((tmp_path / "pair.json").read_text(encoding="utf-8"))
    assert doc["empty"] == "pair.empty.remap"
    assert set(doc["meta"]) >= {"source", "seed", "scale", "dbm_min", "dbm_max"}


def test_pair_resave_is_byte_identical(tmp_path, seeded_pair):
    """Check save, load, save gives identical pair files."""

    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    save_pair(tmp_path / "a" / "pair.json", seeded_pair)
    save_pair(tmp_path / "b" / "pair.json", load_pair(tmp_path / "a" / "pair.json"))

    for name in ("pair.json", "pair.empty.remap", "pair.occupied.remap"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pair_missing_map(tmp_path):
    """Check a pair file naming a missing map fails."""

    pair = EnvironmentPair(GridMap.zeros((2, 2), Unit.DBM), GridMap.zeros((2, 2), Unit.DBM), PairMeta())
    save_pair(tmp_path / "pair.json", pair)
    (tmp_path / "pair.occupied.remap").unlink()

    with pytest.raises(OSError):
        load_pair(tmp_path / "pair.json")
