"""Rank-one decomposition of editable-layer gradients.

For a linear layer ``z = u @ W.T + b`` the weight gradient of any loss is
``sum_p delta[p] u[p]^T`` where ``delta = dL/dz``. Collecting ``(u, delta)``
per token is cheaper than materialising the gradient and is what the
hypernetwork consumes.
"""

from dataclasses import dataclass
from typing import Dict, Iterator, Sequence, Tuple, Union

import numpy as np

from src.core.autodiff import ops
from src.core.autodiff.tensor import backward
from src.core.lm.model import ActivationTrace, ModelWeights, is_linear
from src.core.lm.scoring import answer_nll_terms, score
from src.domain.errors import ContractError
from src.domain.records import TokenSequence


@dataclass(frozen=True)
class LayerFactors:
    """Per-token factors of one layer: ``u`` is tokens x fan_in, ``delta`` tokens x fan_out."""

    layer_id: str
    u: np.ndarray
    delta: np.ndarray

    def __post_init__(self) -> None:
        if self.u.ndim != 2 or self.delta.ndim != 2 or self.u.shape[0] != self.delta.shape[0]:
            raise ContractError(
                f"{self.layer_id}: u {self.u.shape} and delta {self.delta.shape} disagree on tokens"
            )

    @property
    def fan_in(self) -> int:
        return self.u.shape[1]

    @property
    def fan_out(self) -> int:
        return self.delta.shape[1]

    @property
    def n_tokens(self) -> int:
        return self.u.shape[0]

    def gradient(self) -> np.ndarray:
        """The weight gradient these factors encode (fan_out x fan_in)."""
        return self.delta.T @ self.u


@dataclass(frozen=True)
class RankOneFactors:
    """Detached factors for every editable layer, keyed by selector."""

    layers: Tuple[LayerFactors, ...]

    def __iter__(self) -> Iterator[LayerFactors]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def by_layer(self) -> Dict[str, LayerFactors]:
        return {f.layer_id: f for f in self.layers}

    def scaled(self, delta_scale: float) -> "RankOneFactors":
        """Copy with every ``delta`` multiplied by ``delta_scale``."""
        if delta_scale == 1.0:
            return self
        return RankOneFactors(
            tuple(LayerFactors(f.layer_id, f.u, f.delta * delta_scale) for f in self.layers)
        )


def collect_rank_one_factors(
    weights: ModelWeights,
    sequences: Union[TokenSequence, Sequence[TokenSequence]],
    layers: Sequence[str] = (),
) -> RankOneFactors:
    """Collect ``(u, delta)`` for the answer NLL of one or more sequences.

    With several sequences the loss is the sum of their per-sequence answer
    NLLs, so each sequence contributes as if collected alone. Every token row
    is kept, including rows whose ``delta`` is zero.

    Args:
        weights: Model state the gradients are taken at; it is not modified.
        sequences: A sequence or a batch of sequences.
        layers: Selectors to collect; defaults to the config's editable layers.

    Returns:
        Factors with no link to any graph.

    Raises:
        ContractError: If a selector names a parameter that is not a linear map.
    """
    seqs = [sequences] if isinstance(sequences, TokenSequence) else list(sequences)
    names = tuple(layers) or weights.config.editable_layers
    for name in names:
        if not is_linear(name, weights.config):
            raise ContractError(f"layer '{name}' is not a linear layer")

    working = weights.trainable_copy(names)
    trace = ActivationTrace(names)
    log_probs, batch = score(working, seqs, trace)
    terms = answer_nll_terms(log_probs, batch, seqs)
    backward(ops.add_n(terms))

    collected = []
    for name in names:
        out = trace.outputs[name]
        delta = out.grad.copy() if out.grad is not None else np.zeros_like(out.values)
        collected.append(LayerFactors(name, trace.inputs[name], delta))
    return RankOneFactors(tuple(collected))
