"""JSON Lines storage module."""

from src.infrastructure.storage.jsonl.record_store import JsonLinesRecordStore

__all__ = ["JsonLinesRecordStore"]
