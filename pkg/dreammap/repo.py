"""Dreammap repo(sitory) module. Provides the ResultsRepo class and the results CSV export."""


import csv
import statistics
from collections import defaultdict
from pathlib import Path

from .result import ResultRecord

SCORE_COLUMNS = ("rmse", "mae", "seconds")
PROVENANCE_COLUMNS = ("seed", "config", "dataset")
CSV_COLUMNS = ("scale", "budget", "method", "rep", *SCORE_COLUMNS, *PROVENANCE_COLUMNS)


class ResultsRepo:
    """
    The repository is an interface between result records and a permanent storage. Creating a
    repo object requires a storage adapter object to be given; records applied to the repo are
    committed to it.

        from dreammap.repo import ResultsRepo
        from dreammap.result import ResultRecord
        from dreammap.store import RdbmsStore

        repo = ResultsRepo(RdbmsStore("sqlite:///out/results.sqlite"))
        key = {"scale": 1, "budget": 5, "method": "empty_copy", "rep": 0, "seed": 0, "config": "c0", "dataset": "d0"}
        repo.apply(ResultRecord({**key, "rmse": 3.1}))
        repo.has(key)  # True
    """

    def __init__(self, store):
        """Initialise repository. A store object must be given."""

        self._store = store

    @property
    def store(self):
        """Return the storage adapter."""

        return self._store

    def apply(self, record):
        """Apply the record (commit it)."""

        return self._store.commit(record)

    def load_by_key(self, key):
        """Return the record stored for a key mapping, or None."""

        return self._store.load_by_udigest(ResultRecord.digest_of(key))

    def has(self, key):
        return self.load_by_key(key) is not None

    def records(self):
        """Return all records."""

        return self._store.load_all()

    def write_csv(self, path, method_order=None, select=None):
        """
        Write every record as a CSV row, followed by a mean and a std row per group.

        A group is one (scale, budget, method, seed, config, dataset). Rows are ordered by
        scale, budget, method (in `method_order` when given, else by name), the provenance
        fields and rep. The std row is the sample standard deviation, 0 for a single
        repetition. `select`, a predicate on record data, restricts the export.
        """

        order = {name: i for i, name in enumerate(method_order or ())}

        def sort_key(data):
            return (
                data["scale"],
                data["budget"],
                order.get(data["method"], len(order)),
                data["method"],
                *(data[k] for k in PROVENANCE_COLUMNS),
                data["rep"],
            )

        rows = sorted((r.data for r in self.records() if select is None or select(r.data)), key=sort_key)

        groups = defaultdict(list)
        for data in rows:
            groups[(data["scale"], data["budget"], data["method"], *(data[k] for k in PROVENANCE_COLUMNS))].append(data)

        with Path(path).open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for data in rows:
                writer.writerow([repr(data[c]) if isinstance(data[c], float) else data[c] for c in CSV_COLUMNS])

            for (scale, budget, method, *provenance), group in groups.items():
                for label, summarise in (("mean", statistics.mean), ("std", _std)):
                    writer.writerow(
                        [scale, budget, method, label]
                        + [repr(float(summarise([d[c] for d in group]))) for c in SCORE_COLUMNS]
                        + provenance
                    )

        return len(rows)


def _std(values):
    return statistics.stdev(values) if len(values) > 1 else 0.0
