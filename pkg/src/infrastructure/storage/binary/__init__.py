"""Binary tensor checkpoint storage."""

from src.infrastructure.storage.binary.checkpoints import (
    HYPERNET_MAGIC,
    MODEL_MAGIC,
    CheckpointStore,
)
from src.infrastructure.storage.binary.tensor_store import BinaryTensorStore

__all__ = ["BinaryTensorStore", "CheckpointStore", "HYPERNET_MAGIC", "MODEL_MAGIC"]
