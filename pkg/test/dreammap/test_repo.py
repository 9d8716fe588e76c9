import csv

import pytest

from dreammap.methods import METHOD_ORDER
from dreammap.repo import CSV_COLUMNS, ResultsRepo
from dreammap.result import ResultRecord
from dreammap.store import RdbmsStore


def key(scale, budget, method, rep, seed=0, dataset="d0"):
    return {
        "scale": scale,
        "budget": budget,
        "method": method,
        "rep": rep,
        "seed": seed,
        "config": "c0",
        "dataset": dataset,
    }


def record(scale, budget, method, rep, rmse, mae=0.5, seconds=0.25, **provenance):
    return ResultRecord({**key(scale, budget, method, rep, **provenance), "rmse": rmse, "mae": mae, "seconds": seconds})


@pytest.fixture
def repo():
    store = RdbmsStore("sqlite:///:memory:?a=3")

    for r in store.load_all():
        store.delete(r)

    return ResultsRepo(store)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def test_apply_and_has(repo):
    """Check applied records are found by key."""

    repo.apply(record(1, 5, "empty_copy", 0, 3.0))

    assert repo.has(key(1, 5, "empty_copy", 0))
    assert not repo.has(key(1, 5, "empty_copy", 1))
    assert not repo.has(key(1, 5, "empty_copy", 0, seed=1))
    assert not repo.has(key(1, 5, "empty_copy", 0, dataset="d1"))
    assert repo.load_by_key(key(1, 5, "empty_copy", 0)).data["rmse"] == 3.0
    assert len(repo.records()) == 1


def test_csv_rows_ordered(tmp_path, repo):
    """Check data rows are ordered by scale, budget, method order and rep."""

    for r in (
        record(2, 1, "world_model", 0, 1.0),
        record(1, 5, "empty_copy", 1, 2.0),
        record(1, 5, "world_model", 1, 3.0),
        record(1, 5, "world_model", 0, 4.0),
        record(1, 5, "empty_copy", 0, 5.0),
    ):
        repo.apply(r)

    count = repo.write_csv(tmp_path / "results.csv", METHOD_ORDER)
    rows = read_rows(tmp_path / "results.csv")

    assert count == 5
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [row[:4] for row in rows[1:6]] == [
        ["1", "5", "world_model", "0"],
        ["1", "5", "world_model", "1"],
        ["1", "5", "empty_copy", "0"],
        ["1", "5", "empty_copy", "1"],
        ["2", "1", "world_model", "0"],
    ]
    assert rows[1][4:] == ["4.0", "0.5", "0.25", "0", "c0", "d0"]


def test_csv_summary_rows(tmp_path, repo):
    """Check each group gets a mean row and a sample std row."""

    for rep, rmse in enumerate((1.0, 2.0, 6.0)):
        repo.apply(record(1, 10, "gp_same_points", rep, rmse))
    repo.apply(record(1, 10, "empty_copy", 0, 4.0))

    repo.write_csv(tmp_path / "results.csv", METHOD_ORDER)
    summary = {(row[2], row[3]): [float(v) for v in row[4:7]] for row in read_rows(tmp_path / "results.csv")[5:]}

    assert summary[("gp_same_points", "mean")] == pytest.approx([3.0, 0.5, 0.25])
    assert summary[("gp_same_points", "std")] == pytest.approx([(7.0) ** 0.5, 0.0, 0.0])
    assert summary[("empty_copy", "mean")] == pytest.approx([4.0, 0.5, 0.25])
    assert summary[("empty_copy", "std")] == [0.0, 0.0, 0.0]


def test_csv_without_method_order(tmp_path, repo):
    """Check methods sort by name when no order is given."""

    repo.apply(record(1, 1, "world_model", 0, 1.0))
    repo.apply(record(1, 1, "empty_copy", 0, 1.0))
    repo.write_csv(tmp_path / "results.csv")

    assert [row[2] for row in read_rows(tmp_path / "results.csv")[1:3]] == ["empty_copy", "world_model"]


def test_csv_selects_and_groups_by_provenance(tmp_path, repo):
    """Check records of different seeds form separate groups and `select` restricts the export."""

    repo.apply(record(1, 1, "world_model", 0, 1.0))
    repo.apply(record(1, 1, "world_model", 0, 3.0, seed=1))

    repo.write_csv(tmp_path / "all.csv", METHOD_ORDER)
    count = repo.write_csv(tmp_path / "seed1.csv", METHOD_ORDER, select=lambda data: data["seed"] == 1)

    rows = read_rows(tmp_path / "all.csv")
    selected = read_rows(tmp_path / "seed1.csv")

    assert len(rows) == 1 + 2 + 2 * 2
    assert [(row[4], row[7]) for row in rows[3:] if row[3] == "mean"] == [("1.0", "0"), ("3.0", "1")]
    assert count == 1
    assert [row[:5] for row in selected[1:]] == [
        ["1", "1", "world_model", "0", "3.0"],
        ["1", "1", "world_model", "mean", "3.0"],
        ["1", "1", "world_model", "std", "0.0"],
    ]
