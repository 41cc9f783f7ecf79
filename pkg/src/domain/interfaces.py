"""Domain interfaces (ports)."""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from src.domain.records import KnowledgeRecord, TokenSequence


class ConfigLoader(ABC):
    """Interface for configuration loading."""

    @abstractmethod
    def load_preset(self, name: str) -> Dict[str, Any]:
        """Load a named preset.

        Args:
            name: Preset identifier (e.g. "desk").

        Returns:
            Flat dictionary of dotted keys to values.
        """


class RecordStore(ABC):
    """Interface for persisting knowledge records."""

    @abstractmethod
    def save_records(self, records: Sequence[KnowledgeRecord], path: str) -> None:
        """Write records to a file.

        Args:
            records: Records to persist.
            path: Destination file path.
        """

    @abstractmethod
    def load_records(self, path: str) -> List[KnowledgeRecord]:
        """Read records from a file.

        Args:
            path: Source file path.

        Returns:
            Records in file order.
        """

    @abstractmethod
    def save_sequences(self, sequences: Sequence[TokenSequence], path: str) -> None:
        """Write bare prompt/answer sequences to a file."""

    @abstractmethod
    def load_sequences(self, path: str) -> List[TokenSequence]:
        """Read sequences written by ``save_sequences``."""


class TensorStore(ABC):
    """Interface for named-tensor checkpoint containers."""

    @abstractmethod
    def save(
        self,
        path: str,
        header: Sequence[int],
        tensors: Mapping[str, np.ndarray],
    ) -> None:
        """Write a header of integers followed by named 2-D arrays.

        Args:
            path: Destination file path.
            header: Integer fields stored after the magic.
            tensors: Arrays to store, in iteration order.
        """

    @abstractmethod
    def load(self, path: str) -> Tuple[List[int], Dict[str, np.ndarray]]:
        """Read a container written by ``save``.

        Args:
            path: Source file path.

        Returns:
            Header integers and the named arrays in file order.
        """
