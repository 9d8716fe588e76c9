"""Dreammap RDBMS store adapter module (sqlalchemy store really)."""


import json

import sqlalchemy
from singleton_type import Singleton
from sqlalchemy import BINARY, Column, Float, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from ..result import ResultRecord
from ..store_base import StoreBase


class RdbmsStore(StoreBase, metaclass=Singleton):
    """
    This store adapter uses sqlalchemy to persist benchmark result records to an RDBMS.

    Multiple instantiations of the class with the same connection string will result in the same
    object (i.e. a singleton per connection string), so every part of a sweep writing to
    "sqlite:///out/results.sqlite" shares one engine.

    A new session is created for each operation. The key fields are stored in their own
    columns next to the JSON data so that results can be queried per scale and method
    without decoding every row.
    """

    _dsn_store_cache = {}

    @classmethod
    def singleton_ref(cls, dsn):
        """Singleton metaclass callback."""

        return cls._dsn_store_cache.get(dsn)

    @classmethod
    def singleton_set_ref(cls, obj, dsn):
        """Singleton metaclass callback."""

        cls._dsn_store_cache[dsn] = obj

    def singleton_detach_ref(self):
        """Singleton metaclass callback."""

        del type(self)._dsn_store_cache[self._dsn]

    def __init__(self, dsn):
        """Initialise adapter."""

        super().__init__()

        self._dsn = dsn
        self._engine = create_engine(dsn)
        self._session_factory = sessionmaker(bind=self._engine)

        self._setup_tables()

    @property
    def dsn(self):
        return self._dsn

    def commit(self, record):
        """Commit new record to the store, or update it if its key is already stored."""

        session = self._session_factory()
        same_record = self._load_by_udigest(session, record.udigest)

        if same_record is None:
            row = self.ResultTable(
                **record.meta_data,
                udigest=record.udigest,
                scale=record.data["scale"],
                budget=record.data["budget"],
                method=record.data["method"],
                rep=str(record.data["rep"]),
                data=json.dumps(record.data, sort_keys=True),
            )
            session.add(row)
        else:
            row = same_record.store_ref
            session.add(row)

            row.created_ts = record.meta_data["created_ts"]
            row.data = json.dumps(record.data, sort_keys=True)

        session.flush()
        session.commit()

        record.link_store(row.id, self, row)

        session.close()

    def delete(self, record):
        """Delete record from the store."""

        session = self._session_factory()
        row = session.query(self.ResultTable).filter(self.ResultTable.id == record.id)[0]
        session.delete(row)
        session.commit()
        session.close()

        record.link_store(None, None)

    def load_by_id(self, id):
        """Load record from the store by primary key ID."""

        session = self._session_factory()

        try:
            row = session.query(self.ResultTable).filter(self.ResultTable.id == id)[0]
        except IndexError:
            return None
        finally:
            session.close()

        return self._row_to_record(row)

    def _load_by_udigest(self, session, udigest):
        try:
            row = session.query(self.ResultTable).filter(self.ResultTable.udigest == udigest)[0]
        except IndexError:
            return None

        return self._row_to_record(row)

    def load_by_udigest(self, udigest):
        """Load record from the store by its (binary) digest value."""

        session = self._session_factory()
        record = self._load_by_udigest(session, udigest)
        session.close()

        return record

    def load_all(self):
        """Load all records from the store, in commit order."""

        session = self._session_factory()
        records = [self._row_to_record(row) for row in session.query(self.ResultTable).order_by(self.ResultTable.id)]
        session.close()

        return records

    def _row_to_record(self, row):
        return ResultRecord.restore({"created_ts": row.created_ts}, json.loads(row.data), row.id, self, store_ref=row)

    def _setup_tables(self):
        table_base = declarative_base()

        class ResultTable(table_base):
            __tablename__ = "results"

            id = Column(Integer, primary_key=True)
            udigest = Column(BINARY)
            created_ts = Column(Float)
            scale = Column(Integer)
            budget = Column(Integer)
            method = Column(String)
            rep = Column(String)
            data = Column(String)

            __table_args__ = (
                sqlalchemy.Index("udigest_index", "udigest"),
                sqlalchemy.Index("cell_index", "scale", "budget", "method"),
            )

            def __repr__(self):
                return (
                    f"<RdbmsStore.Result(id='{self.id}'"
                    f", scale='{self.scale}'"
                    f", budget='{self.budget}'"
                    f", method='{self.method}'"
                    f", rep='{self.rep}'"
                    f", data='{self.data}'"
                    ")>"
                )

        self.ResultTable = ResultTable

        table_base.metadata.create_all(self._engine)
