"""Training-free lifelong editing with a trained hypernetwork, plus the fine-tuning baseline."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.autodiff.tensor import backward, no_grad
from src.core.hypernet.network import HyperNetwork, apply_update
from src.core.lm.factors import collect_rank_one_factors
from src.core.lm.model import ModelWeights
from src.core.lm.scoring import mean_answer_nll
from src.core.optim import OptimizerFactory, single_group
from src.domain.errors import DegenerateInputError, TrainingFailureError
from src.domain.kinds import OptimizerKind
from src.domain.records import KnowledgeRecord, RecordBatch

logger = logging.getLogger(__name__)

StepObserver = Callable[[int, ModelWeights, Sequence[KnowledgeRecord]], None]


@dataclass
class EditSessionState:
    """Progress of one editing session.

    Attributes:
        weights: Current weights W_t.
        applied_steps: Number of updates applied so far.
        step_seconds: Wall time of factor collection, transform and apply, per step.
        step_norms_sq: Squared Frobenius norm of each step's update, per layer.
        cumulative_norm: Frobenius norm of W_t - W_0, per edited layer.
    """

    weights: ModelWeights
    applied_steps: int = 0
    step_seconds: List[float] = field(default_factory=list)
    step_norms_sq: List[Dict[str, float]] = field(default_factory=list)
    cumulative_norm: Dict[str, float] = field(default_factory=dict)

    @property
    def mean_edit_seconds(self) -> float:
        return float(np.mean(self.step_seconds)) if self.step_seconds else 0.0

    def norm_rows(self) -> List[Dict[str, float]]:
        """One row per step and layer, for the update-norm table."""
        return [
            {"step": step, "layer": layer, "norm_sq": value}
            for step, norms in enumerate(self.step_norms_sq, start=1)
            for layer, value in norms.items()
        ]


def _cumulative_norm(
    weights_0: ModelWeights, weights: ModelWeights, layers: Sequence[str]
) -> Dict[str, float]:
    return {
        name: float(np.linalg.norm(weights[name].values - weights_0[name].values))
        for name in layers
    }


def edit_stream(
    weights_0: ModelWeights,
    h: HyperNetwork,
    stream: Sequence[RecordBatch],
    lr_inner: float = 1.0,
    observer: Optional[StepObserver] = None,
) -> Tuple[ModelWeights, EditSessionState]:
    """Apply the hypernetwork's edits batch by batch, without any training.

    The hypernetwork is switched to evaluation mode, so its normalizer
    statistics stay frozen and θ is never touched. ``weights_0`` is not
    modified.

    Args:
        weights_0: Pretrained weights.
        h: Trained hypernetwork.
        stream: Record batches in edit order.
        lr_inner: Scale on the collected ``delta`` factors, as in training.
        observer: Called after each step with the step index, W_t and every
            record edited so far; its time is not counted as edit time.

    Returns:
        Final weights W_n and the session state.

    Raises:
        DegenerateInputError: If the stream is empty.
        TrainingFailureError: If an update has non-finite entries.
    """
    if not stream:
        raise DegenerateInputError("edit stream is empty")
    h.eval()
    layers = weights_0.config.editable_layers
    state = EditSessionState(weights=weights_0)
    edited: List[KnowledgeRecord] = []

    for t, batch in enumerate(stream, start=1):
        started = time.perf_counter()
        factors = collect_rank_one_factors(state.weights, [r.edit_sequence for r in batch])
        with no_grad():
            update = h.transform(factors.scaled(lr_inner), step=t)
            if not update.is_finite():
                raise TrainingFailureError("non-finite edit update", step=t)
            state.weights = apply_update(state.weights, update)
        state.step_seconds.append(time.perf_counter() - started)
        state.applied_steps += 1
        state.step_norms_sq.append(update.norms_sq())
        edited.extend(batch)
        logger.debug("Edit step %d/%d: %.4fs", t, len(stream), state.step_seconds[-1])
        if observer:
            observer(t, state.weights, edited)

    state.cumulative_norm = _cumulative_norm(weights_0, state.weights, layers)
    logger.info(
        "Edited %d records in %d steps (mean %.4fs per step)",
        len(edited),
        state.applied_steps,
        state.mean_edit_seconds,
    )
    return state.weights, state


def fine_tune_baseline(
    weights_0: ModelWeights,
    stream: Sequence[RecordBatch],
    steps_per_edit: int,
    lr: float,
) -> ModelWeights:
    """Sequential fine-tuning of the editable layers on each batch's edit NLL.

    Raises:
        TrainingFailureError: If the edit loss becomes non-finite.
    """
    layers = weights_0.config.editable_layers
    current = weights_0
    for t, batch in enumerate(stream, start=1):
        if steps_per_edit == 0:
            continue
        working = current.trainable_copy(layers)
        optimizer = OptimizerFactory.create(
            OptimizerKind.SGD, single_group([working[name] for name in layers], lr)
        )
        sequences = [r.edit_sequence for r in batch]
        for _ in range(steps_per_edit):
            optimizer.zero_grad()
            loss = mean_answer_nll(working, sequences)
            if not np.isfinite(loss.item()):
                raise TrainingFailureError("non-finite fine-tuning loss", step=t)
            backward(loss)
            optimizer.step()
        current = working.snapshot()
        current.version = weights_0.version + t
    return current
