"""Tabular result writers."""

from src.infrastructure.storage.tables.table_writer import TableWriter

__all__ = ["TableWriter"]
