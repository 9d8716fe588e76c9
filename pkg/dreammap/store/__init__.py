"""Dreammap result store adapters module."""


from .rdbms import RdbmsStore
