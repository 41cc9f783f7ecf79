"""Per-step edit reward and trajectory return.

The reward of step ``t`` is ``-(L_base + L_back + eta * reg)`` where

* ``L_base`` is the edit loss on the paraphrase pair plus ``lambda_loc`` times
  the KL to the pretrained model on the locality prompt,
* ``L_back`` re-scores the previous batches with decayed weights,
* ``reg`` is the squared Frobenius norm of the applied update.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.autodiff import ops
from src.core.autodiff.tensor import Tensor
from src.core.hypernet.network import EditUpdate
from src.core.lm.model import ModelWeights
from src.core.lm.scoring import answer_nll_terms, reference_log_probs, score
from src.domain.errors import ContractError, DegenerateInputError
from src.domain.records import KnowledgeRecord, RecordBatch, TokenSequence

BREAKDOWN_COLUMNS = ("l_edit", "l_loc", "l_base", "l_back", "reg", "r")


@dataclass(frozen=True)
class BaseLossParts:
    """Detached components of the base loss of one batch."""

    l_edit: float
    l_loc: float
    l_base: float


@dataclass(frozen=True)
class RewardBreakdown:
    """Detached per-step reward components for logging."""

    l_edit: float
    l_loc: float
    l_base: float
    l_back: float
    reg: float
    r: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in asdict(self).values())


class LocalityReference:
    """Pretrained-model log-probabilities, cached per token sequence.

    The pretrained weights never change during a run, so each locality prompt
    is scored once.
    """

    def __init__(self, weights_0: ModelWeights):
        self.weights_0 = weights_0
        self._cache: Dict[Tuple[int, ...], np.ndarray] = {}

    def rows(self, sequences: Sequence[TokenSequence]) -> List[np.ndarray]:
        missing = [s for s in dict.fromkeys(sequences) if s.tokens not in self._cache]
        if missing:
            values = reference_log_probs(self.weights_0, missing)
            offset = 0
            for seq in missing:
                self._cache[seq.tokens] = values[offset : offset + len(seq)]
                offset += len(seq)
        return [self._cache[s.tokens] for s in sequences]


def format_decimal(value: float) -> str:
    """Plain decimal with 10 significant digits."""
    return np.format_float_positional(value, precision=10, unique=False, fractional=False, trim="-")


def _as_batch(records: Union[KnowledgeRecord, Sequence[KnowledgeRecord]]) -> List[KnowledgeRecord]:
    batch = [records] if isinstance(records, KnowledgeRecord) else list(records)
    if not batch:
        raise DegenerateInputError("reward needs at least one record")
    return batch


def record_losses(
    weights_cur: ModelWeights,
    records: Sequence[KnowledgeRecord],
    reference: LocalityReference,
) -> Tuple[List[Tensor], List[Tensor]]:
    """Paraphrase NLL and locality KL for each record, from a single packed forward pass."""
    equivalence = [r.equivalence_sequence for r in records]
    locality = [r.locality_sequence for r in records]
    log_probs, batch = score(weights_cur, equivalence + locality)

    ref = np.zeros_like(log_probs.values)
    for i, rows in enumerate(reference.rows(locality), start=len(records)):
        start = int(batch.starts[i])
        ref[start : start + rows.shape[0]] = rows

    nll = answer_nll_terms(log_probs, batch, equivalence)
    ref_tensor = ops.constant(ref)
    kl = [
        ops.kl_divergence(ref_tensor, log_probs, batch.prediction_mask(i))
        for i in range(len(records), len(batch))
    ]
    return nll, kl


def _combine(nll: Sequence[Tensor], kl: Sequence[Tensor], lambda_loc: float) -> Tuple[Tensor, Tensor, Tensor]:
    l_edit = ops.scale(ops.add_n(nll), 1.0 / len(nll))
    l_loc = ops.scale(ops.add_n(kl), 1.0 / len(kl))
    return l_edit, l_loc, ops.add(l_edit, ops.scale(l_loc, lambda_loc))


def base_loss(
    weights_cur: ModelWeights,
    weights_0: ModelWeights,
    records: Union[KnowledgeRecord, Sequence[KnowledgeRecord]],
    lambda_loc: float,
    reference: Optional[LocalityReference] = None,
) -> Tuple[Tensor, BaseLossParts]:
    """``L_e + lambda_loc * L_loc`` averaged over the records of a batch.

    Differentiable through ``weights_cur``; the pretrained side is constant.
    """
    batch = _as_batch(records)
    reference = reference or LocalityReference(weights_0)
    nll, kl = record_losses(weights_cur, batch, reference)
    l_edit, l_loc, base = _combine(nll, kl, lambda_loc)
    return base, BaseLossParts(l_edit.item(), l_loc.item(), base.item())


def backtracking_coefficients(m: int, mu: float) -> List[float]:
    """Weights ``mu^m, ..., mu^1`` for ``m`` history entries, oldest first."""
    return [mu ** (m - j) for j in range(m)]


def backtracking_loss(
    weights_cur: ModelWeights,
    weights_0: ModelWeights,
    history: Sequence[RecordBatch],
    t: int,
    mu: float,
    lambda_loc: float,
    reference: Optional[LocalityReference] = None,
) -> Tensor:
    """Decay-weighted base losses of earlier batches, re-scored under ``weights_cur``.

    ``history`` holds the batches of steps ``t - m .. t - 1`` (most recent last);
    the batch of step ``i`` gets weight ``mu^(t - i)``. All history batches are
    scored in one packed forward pass.

    Raises:
        ContractError: If the history reaches back before the trajectory start.
    """
    m = len(history)
    if m > max(t - 1, 0):
        raise ContractError(f"history of {m} batches is too long for step {t}")
    if m == 0:
        return ops.constant(np.zeros((1, 1)))
    reference = reference or LocalityReference(weights_0)
    flat = [r for batch in history for r in batch]
    nll, kl = record_losses(weights_cur, flat, reference)

    weighted = []
    offset = 0
    for coefficient, batch in zip(backtracking_coefficients(m, mu), history):
        _, _, base = _combine(
            nll[offset : offset + len(batch)], kl[offset : offset + len(batch)], lambda_loc
        )
        weighted.append(ops.scale(base, coefficient))
        offset += len(batch)
    return ops.add_n(weighted)


def step_reward(
    base: Tensor,
    back: Tensor,
    update: EditUpdate,
    eta: float,
    base_parts: Optional[BaseLossParts] = None,
) -> Tuple[Tensor, RewardBreakdown]:
    """``r = -(base + back + eta * reg)`` with ``reg`` summed over updated layers.

    ``reg`` is always reported in the breakdown, even when ``eta`` is 0.
    """
    reg = update.regularizer() if update.deltas else ops.constant(np.zeros((1, 1)))
    total = ops.add(ops.add(base, back), ops.scale(reg, eta))
    reward = ops.scale(total, -1.0)
    l_base = base.item()
    parts = base_parts or BaseLossParts(l_edit=l_base, l_loc=0.0, l_base=l_base)
    breakdown = RewardBreakdown(
        l_edit=parts.l_edit,
        l_loc=parts.l_loc,
        l_base=l_base,
        l_back=back.item(),
        reg=reg.item(),
        r=reward.item(),
    )
    return reward, breakdown


def trajectory_return(rewards: Sequence[Tensor], gamma: float) -> Tensor:
    """``J = sum_{i=1..n} gamma^i r_i``.

    Raises:
        DegenerateInputError: If ``rewards`` is empty.
    """
    if not rewards:
        raise DegenerateInputError("trajectory has no rewards")
    if gamma == 1.0:
        return ops.add_n(list(rewards))
    return ops.add_n([ops.scale(r, gamma**i) for i, r in enumerate(rewards, start=1)])
