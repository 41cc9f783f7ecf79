"""Losses, log-probabilities and greedy decoding on top of the forward pass."""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.autodiff import ops
from src.core.autodiff.tensor import Tensor, no_grad
from src.core.lm.model import ActivationTrace, ModelWeights, PackedBatch, forward
from src.domain.errors import ContractError, DegenerateInputError
from src.domain.records import TokenSequence


def score(
    weights: ModelWeights,
    sequences: Sequence[TokenSequence],
    trace: Optional[ActivationTrace] = None,
) -> Tuple[Tensor, PackedBatch]:
    """Log-probabilities for a packed batch of sequences."""
    batch = PackedBatch.pack([s.tokens for s in sequences], weights.config)
    return forward(weights, batch, trace), batch


def answer_nll_terms(
    log_probs: Tensor, batch: PackedBatch, sequences: Sequence[TokenSequence]
) -> List[Tensor]:
    """Per-sequence mean NLL over the answer span.

    Raises:
        DegenerateInputError: If a sequence has an empty answer span.
    """
    terms = []
    for i, seq in enumerate(sequences):
        if not seq.answer:
            raise DegenerateInputError(f"sequence {i} has an empty answer span")
        terms.append(ops.nll_loss(log_probs, batch.targets, batch.answer_mask(i, seq.prompt_len)))
    return terms


def answer_kl_terms(
    reference_log_probs: np.ndarray, log_probs: Tensor, batch: PackedBatch
) -> List[Tensor]:
    """Per-sequence mean token KL(reference || current) over every in-sequence prediction."""
    reference = ops.constant(reference_log_probs)
    return [
        ops.kl_divergence(reference, log_probs, batch.prediction_mask(i)) for i in range(len(batch))
    ]


def reference_log_probs(weights: ModelWeights, sequences: Sequence[TokenSequence]) -> np.ndarray:
    """Log-probabilities as plain arrays, computed without recording a graph."""
    with no_grad():
        log_probs, _ = score(weights, sequences)
    return log_probs.values


def answer_nll(weights: ModelWeights, seq: TokenSequence) -> Tensor:
    """Mean NLL of ``seq``'s answer span given its prompt."""
    log_probs, batch = score(weights, [seq])
    return answer_nll_terms(log_probs, batch, [seq])[0]


def mean_answer_nll(weights: ModelWeights, sequences: Sequence[TokenSequence]) -> Tensor:
    """Mean over sequences of their answer-span NLL, from one packed forward pass."""
    log_probs, batch = score(weights, sequences)
    terms = answer_nll_terms(log_probs, batch, sequences)
    return ops.scale(ops.add_n(terms), 1.0 / len(terms))


def answer_kl(weights_ref: ModelWeights, weights_cur: ModelWeights, seq: TokenSequence) -> Tensor:
    """Mean token KL between the reference and current models over the whole sequence.

    Raises:
        ContractError: If the two weight sets have different configurations.
    """
    if weights_ref.config != weights_cur.config:
        raise ContractError("answer_kl needs weight sets of the same configuration")
    reference = reference_log_probs(weights_ref, [seq])
    log_probs, batch = score(weights_cur, [seq])
    return answer_kl_terms(reference, log_probs, batch)[0]


def answer_log_probs(weights: ModelWeights, sequences: Sequence[TokenSequence]) -> np.ndarray:
    """Total log-probability of each sequence's answer span (no graph)."""
    with no_grad():
        log_probs, batch = score(weights, sequences)
    values = log_probs.values
    totals = np.empty(len(sequences))
    for i, seq in enumerate(sequences):
        rows = np.nonzero(batch.answer_mask(i, seq.prompt_len))[0]
        totals[i] = values[rows, batch.targets[rows]].sum()
    return totals


def greedy_decode_batch(
    weights: ModelWeights, prompts: Sequence[Sequence[int]], max_new: int
) -> List[Tuple[int, ...]]:
    """Greedy continuations of several prompts, one packed forward per generated token.

    Ties go to the lowest token index. Generation stops early at the model's
    context length.
    """
    if any(len(p) == 0 for p in prompts):
        raise ContractError("greedy_decode needs nonempty prompts")
    current = [list(p) for p in prompts]
    limit = weights.config.max_seq_len
    with no_grad():
        for _ in range(max_new):
            active = [i for i, tokens in enumerate(current) if len(tokens) < limit]
            if not active:
                break
            batch = PackedBatch.pack([current[i] for i in active], weights.config)
            log_probs = forward(weights, batch).values
            next_tokens = np.argmax(log_probs[batch.last_rows()], axis=1)
            for i, token in zip(active, next_tokens):
                current[i].append(int(token))
    return [tuple(tokens[len(prompt) :]) for tokens, prompt in zip(current, prompts)]


def greedy_decode(weights: ModelWeights, prompt: Sequence[int], max_new: int) -> Tuple[int, ...]:
    """Greedy continuation of ``prompt`` of at most ``max_new`` tokens."""
    return greedy_decode_batch(weights, [prompt], max_new)[0]
