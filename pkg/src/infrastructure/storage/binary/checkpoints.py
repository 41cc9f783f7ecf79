"""Model and hypernetwork checkpoints on top of the binary tensor container."""

import logging
from typing import List, Optional

from src.core.autodiff.tensor import Tensor
from src.core.hypernet.network import HyperNetwork, hypernetwork_from_state
from src.core.lm.model import ModelWeights
from src.domain.config import ModelConfig
from src.domain.errors import CheckpointFormatError, ContractError, DimensionError
from src.domain.interfaces import TensorStore
from src.infrastructure.storage.binary.tensor_store import BinaryTensorStore

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"RLE1"
HYPERNET_MAGIC = b"RLH1"

MODEL_HEADER_FIELDS = ("vocab_size", "d_model", "n_layers", "d_ff", "n_heads", "max_seq_len")


def model_header(config: ModelConfig) -> List[int]:
    return [getattr(config, name) for name in MODEL_HEADER_FIELDS]


class CheckpointStore:
    """Reads and writes model (``RLE1``) and hypernetwork (``RLH1``) checkpoints."""

    def __init__(
        self,
        model_store: Optional[TensorStore] = None,
        hypernet_store: Optional[TensorStore] = None,
    ):
        """Initialize the store.

        Args:
            model_store: Container for model weights; defaults to ``RLE1`` files.
            hypernet_store: Container for hypernetworks; defaults to ``RLH1`` files.
        """
        self._model_store = model_store or BinaryTensorStore(MODEL_MAGIC, len(MODEL_HEADER_FIELDS))
        self._hypernet_store = hypernet_store or BinaryTensorStore(HYPERNET_MAGIC)

    def save_model(self, weights: ModelWeights, path: str) -> None:
        """Write model weights in parameter order."""
        self._model_store.save(path, model_header(weights.config), weights.as_numpy())
        logger.debug("Saved model checkpoint to %s", path)

    def load_model(self, path: str, config: ModelConfig) -> ModelWeights:
        """Read model weights written for ``config``'s architecture.

        Raises:
            FileNotFoundError: If the file does not exist.
            CheckpointFormatError: If the file is malformed or was written for another shape.
        """
        header, tensors = self._model_store.load(path)
        expected = model_header(config)
        if header != expected:
            raise CheckpointFormatError(
                f"{path}: header {header} does not match model config "
                f"{dict(zip(MODEL_HEADER_FIELDS, expected))}"
            )
        try:
            return ModelWeights(config, {name: Tensor(v, name=name) for name, v in tensors.items()})
        except (ContractError, DimensionError) as exc:
            raise CheckpointFormatError(f"{path}: {exc}") from exc

    def save_hypernetwork(self, h: HyperNetwork, path: str) -> None:
        """Write hypernetwork parameters and normalizer statistics."""
        self._hypernet_store.save(path, h.header(), h.state_dict())
        logger.debug("Saved hypernetwork checkpoint to %s", path)

    def load_hypernetwork(self, path: str, model_config: ModelConfig) -> HyperNetwork:
        """Read a hypernetwork for ``model_config``'s editable layers, in eval mode.

        Raises:
            FileNotFoundError: If the file does not exist.
            CheckpointFormatError: If the file is malformed or does not fit the editable layers.
        """
        header, state = self._hypernet_store.load(path)
        try:
            return hypernetwork_from_state(model_config, header, state).eval()
        except (ContractError, DimensionError) as exc:
            raise CheckpointFormatError(f"{path}: {exc}") from exc
