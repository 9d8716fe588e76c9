"""
Dreammap store base module.

Store adapters should inherit the `StoreBase` class and override the methods.

Store adapter `__init__` implementations should call the super class `__init__` first.
The other methods should not call the super class as an unimplemented error will be raised.

Adapters persist `ResultRecord` objects. They must index records by their uniqueness
digest, because the sweep asks "is this cell done?" once per cell, and must tolerate
commits arriving from several worker threads (the harness serialises them, but a
session per operation is the expected minimum).
"""


class StoreBase:
    """Store adapter base class."""

    class UnimplementedError(Exception):
        """Raised for calls to methods unimplemented by subclasses."""

        def __init__(self, msg=None):
            super().__init__(msg or "unimplemented")  # pragma: no cover

    def commit(self, record):
        """
        Commit the record (create or update) to permanent storage, or raise if unsuccessful.

        Subclass must implement.

        The adapter must call the record's `link_store` method after storage, passing the primary key
        ID and optionally a reference, such as an object useful to the storage adapter.
        """

        raise self.UnimplementedError()  # pragma: no cover

    def delete(self, record):
        """
        Delete the record from permanent storage, or raise if unsuccessful.

        Subclass must implement.
        """

        raise self.UnimplementedError()  # pragma: no cover

    def load_by_id(self, id):
        """
        Access data from permanent storage and return a record object. The "id" param is a unique primary key.

        Subclass should implement, though technically it is not absolutely mandatory.
        """

        raise self.UnimplementedError()  # pragma: no cover

    def load_by_udigest(self, udigest):
        """
        Access data from permanent storage and return a record object, or None.

        The "udigest" param is a binary value calculated from the key fields of the record (see
        `ResultRecord.digest_of`). Subclass must implement. The operation MUST be efficient, i.e.
        subject to an index.
        """

        raise self.UnimplementedError()  # pragma: no cover

    def load_all(self):
        """
        Access data from permanent storage and return a record objects iterable for every single record.

        Subclass must implement. The results export is built from it.
        """

        raise self.UnimplementedError()  # pragma: no cover
