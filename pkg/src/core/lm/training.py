"""Pretraining of the base model on the synthetic fact corpus."""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.core.autodiff import ops
from src.core.autodiff.tensor import backward, no_grad
from src.core.lm.model import ModelWeights, PackedBatch, forward, init_weights
from src.core.optim import OptimizerFactory, single_group
from src.domain.config import ModelConfig, PretrainConfig
from src.domain.errors import DegenerateInputError, TrainingFailureError
from src.domain.kinds import OptimizerKind
from src.domain.records import TokenSequence

logger = logging.getLogger(__name__)


@dataclass
class PretrainResult:
    """Pretrained weights and the loss trajectory that produced them."""

    weights: ModelWeights
    final_loss: float
    losses: List[float] = field(default_factory=list)


def _loss_mask(batch: PackedBatch, sequences: Sequence[TokenSequence], answer_only: bool) -> np.ndarray:
    mask = np.zeros(batch.n_rows, dtype=bool)
    for i, seq in enumerate(sequences):
        mask |= batch.answer_mask(i, seq.prompt_len) if answer_only else batch.prediction_mask(i)
    return mask


def corpus_loss(
    weights: ModelWeights, sequences: Sequence[TokenSequence], answer_only: bool = True
):
    """Mean next-token NLL over the scored rows of a packed batch."""
    batch = PackedBatch.pack([s.tokens for s in sequences], weights.config)
    log_probs = forward(weights, batch)
    return ops.nll_loss(log_probs, batch.targets, _loss_mask(batch, sequences, answer_only))


def pretrain(
    config: ModelConfig,
    corpus: Sequence[TokenSequence],
    steps: int,
    seed: int,
    settings: PretrainConfig = PretrainConfig(),
) -> PretrainResult:
    """Train a freshly initialised model on ``corpus`` with Adam.

    Batches are drawn by walking a seeded permutation of the corpus, reshuffled
    whenever it is exhausted, so results depend only on ``seed``.

    Args:
        config: Model shape.
        corpus: Training sequences.
        steps: Number of optimizer steps; 0 returns the initial weights.
        seed: Seed for initialisation and batch order.
        settings: Learning rate, batch size and loss masking.

    Returns:
        The trained weights with the per-step losses.

    Raises:
        DegenerateInputError: If the corpus is empty.
        TrainingFailureError: If the loss becomes non-finite.
    """
    if not corpus:
        raise DegenerateInputError("pretraining corpus is empty")
    rng = np.random.default_rng(seed)
    weights = init_weights(config, rng)
    params = weights.tensors()
    for p in params:
        p.requires_grad = True
    optimizer = OptimizerFactory.create(OptimizerKind.ADAMW, single_group(params, settings.lr))

    batch_size = min(settings.batch_size, len(corpus))
    order = rng.permutation(len(corpus))
    cursor = 0
    losses: List[float] = []
    log_every = max(1, steps // 10)

    for step in range(1, steps + 1):
        if cursor + batch_size > len(order):
            order = rng.permutation(len(corpus))
            cursor = 0
        batch = [corpus[i] for i in order[cursor : cursor + batch_size]]
        cursor += batch_size

        optimizer.zero_grad()
        loss = corpus_loss(weights, batch, settings.answer_only)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingFailureError("pretraining loss is not finite", step=step)
        backward(loss)
        optimizer.step()
        losses.append(value)
        if step % log_every == 0 or step == steps:
            logger.info("Pretrain step %d/%d: loss=%.4f", step, steps, value)

    for p in params:
        p.requires_grad = False
        p.zero_grad()

    if losses:
        final_loss = losses[-1]
    else:
        with no_grad():
            final_loss = corpus_loss(weights, corpus[:batch_size], settings.answer_only).item()
    return PretrainResult(weights=weights, final_loss=final_loss, losses=losses)
