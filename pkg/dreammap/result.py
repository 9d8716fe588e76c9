"""Dreammap result module. Provides ResultRecord class."""


import hashlib
from datetime import datetime

import bencodepy

from .errors import DataError


class ResultRecord:
    """
    Result records represent one cell of a benchmark sweep: how well one reconstruction
    method did on one environment scale, with one measurement budget, in one repetition.

    The data is a dictionary, which must be JSON serialisable and must hold the key
    fields "scale", "budget", "method", "rep", "seed", "config" and "dataset". The last
    two are hex digests of the experiment settings and of the pairs the cell ran on, so
    results of another seed, setting or dataset never stand in for each other. Everything
    else ("rmse", "mae", "seconds", "cells" and so on) is just information.

    The key fields, and only the key fields, define the identity of a record. Two records
    with the same key are the same record, even if they are different objects with
    different errors, so committing a record for a key that is already stored updates
    the stored record rather than adding a second one. That is what makes it safe to rerun
    a sweep over the same output directory: cells already computed can be found by key
    and skipped, and cells computed again simply replace their previous results.

        from dreammap.result import ResultRecord

        key = {"scale": 1, "budget": 10, "method": "world_model", "rep": 0, "seed": 0, "config": "c0", "dataset": "d0"}
        r1 = ResultRecord({**key, "rmse": 1.2})
        r2 = ResultRecord({**key, "rmse": 1.1})
        # r1 and r2 have the same udigest, committing r2 after r1 updates the stored r1

    The record also carries a "created_ts" meta data timestamp, defaulting to the
    current time.
    """

    unique_by = ("scale", "budget", "method", "rep", "seed", "config", "dataset")

    def __init__(self, data, *, ts=None):
        """
        Initialise record.

        An optional "ts" kwarg is given to change the creation time. This should be a
        floating point timestamp value. The default will be the current time.
        """

        self._store = None
        self._id = None
        self._store_ref = None

        self._set_meta_data(None, ts)
        self._set_data(data)

    def _set_meta_data(self, meta_data=None, ts=None):
        if meta_data is None:
            meta_data = {"created_ts": ts if ts is not None else datetime.now().timestamp()}

        self._meta_data = meta_data

    def _set_data(self, data=None):
        self._data = data or {}

        missing = [k for k in type(self).unique_by if k not in self._data]
        if missing:
            raise DataError(f"result record lacks key fields {missing}")

        self._udigest = type(self).digest_of(self._data)

    @classmethod
    def digest_of(cls, key):
        """The uniqueness digest of a key (any mapping holding the key fields)."""

        return hashlib.sha256(bencodepy.encode({k: key[k] for k in cls.unique_by})).digest()

    @property
    def data(self):
        """The record's data."""

        return self._data.copy()

    @property
    def meta_data(self):
        """The record's meta data, a dictionary with a "created_ts" key."""

        return self._meta_data.copy()

    @property
    def all_data(self):
        """All the record's data, that is the actual result data, and the meta data, merged."""

        return {**self._data, **self._meta_data}

    @property
    def key(self):
        """The (scale, budget, method, rep, seed, config, dataset) tuple."""

        return tuple(self._data[k] for k in type(self).unique_by)

    def __repr__(self):
        return (
            self.__module__
            + "."
            + self.__class__.__name__
            + "{"
            + ", ".join([f"{repr(k)}: {repr(v)}" for k, v in {**self._meta_data, **self._data}.items()])
            + "}"
        )

    def __str__(self):
        return self.__repr__()

    def __eq__(self, other):
        return (
            type(self) == type(other)
            and self.id == other.id
            and self.meta_data == other.meta_data
            and self.data == other.data
        )

    @classmethod
    def restore(cls, meta_data, data, id, store, store_ref=None):
        """Restore record, used by store adapters to deserialise a stored record."""

        record = cls(data)
        record.link_store(id, store, store_ref=store_ref)
        record._set_meta_data(meta_data)

        return record

    @property
    def id(self):
        """The (unique, primary key) storage ID of the record, IF it has been committed."""

        return self._id

    @property
    def udigest(self):
        """A digest of the key fields of the record."""

        return self._udigest

    @property
    def store_ref(self):
        """A store reference, should be considered opaque and used only by the store adapter."""

        return self._store_ref

    @property
    def store(self):
        """The store, which should be `None` or an instance of a store class."""

        return self._store

    def link_store(self, id, store, store_ref=None):
        """Link record to a back end storage, used by the store adapter when the record is committed."""

        self._id = id
        self._store = store
        self._store_ref = store_ref
