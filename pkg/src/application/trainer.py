"""Hypernetwork training over chained edit trajectories."""

import dataclasses
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.application.corpus import StreamSampler
from src.core.autodiff import ops
from src.core.autodiff.tensor import Tensor, backward
from src.core.hypernet.network import EditUpdate, HyperNetwork, apply_update
from src.core.lm.factors import collect_rank_one_factors
from src.core.lm.model import ModelWeights
from src.core.optim import AdamW, Optimizer, ParamGroup, clip_grad_norm
from src.core.reward.reward import (
    LocalityReference,
    RewardBreakdown,
    backtracking_loss,
    base_loss,
    step_reward,
    trajectory_return,
)
from src.domain.config import HyperParams, TrainerConfig
from src.domain.errors import DegenerateInputError, TrainingFailureError
from src.domain.records import RecordBatch

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6

CheckpointCallback = Callable[[int, HyperNetwork], None]


@dataclass
class TrajectoryStep:
    """One MDP step: the batch edited, the action taken and its reward."""

    t: int
    record_batch: RecordBatch
    update: EditUpdate
    breakdown: RewardBreakdown


@dataclass
class EpisodeLog:
    """Everything one rollout produced apart from the graph."""

    steps: List[TrajectoryStep] = field(default_factory=list)
    j: float = 0.0
    wall_time: float = 0.0

    def rows(self, epoch: int) -> List[Dict[str, Any]]:
        return [{"epoch": epoch, "step": s.t, **s.breakdown.as_dict()} for s in self.steps]

    def mean_update_norm_sq(self) -> float:
        if not self.steps:
            return 0.0
        return float(np.mean([s.breakdown.reg for s in self.steps]))


@dataclass
class TrainingLog:
    """Per-epoch returns and per-step reward breakdowns of a training run."""

    epochs: List[Dict[str, Any]] = field(default_factory=list)
    steps: List[Dict[str, Any]] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def returns(self) -> List[float]:
        return [e["j"] for e in self.epochs]

    def record(self, epoch: int, episode: EpisodeLog) -> None:
        self.epochs.append({"epoch": epoch, "j": episode.j, "wall_time": episode.wall_time})
        self.steps.extend(episode.rows(epoch))


@dataclass
class TrainingResult:
    hypernetwork: HyperNetwork
    log: TrainingLog


class MarkovAccessLog:
    """Records which weight versions and history steps each rollout step reads.

    Step ``t`` may read W_{t-1} and the W_t it produces, and history from
    steps ``t-k .. t-1`` only.
    """

    def __init__(self) -> None:
        self.weight_reads: List[Tuple[int, int]] = []
        self.history_reads: List[Tuple[int, Tuple[int, ...]]] = []

    def read_weights(self, t: int, version: int) -> None:
        self.weight_reads.append((t, version))

    def read_history(self, t: int, steps: Sequence[int]) -> None:
        self.history_reads.append((t, tuple(steps)))

    def violations(self, k: int) -> List[str]:
        found = []
        for t, version in self.weight_reads:
            if version < t - 1 or version > t:
                found.append(f"step {t} read weights W_{version}")
        for t, steps in self.history_reads:
            stale = [s for s in steps if s < t - k or s >= t]
            if stale:
                found.append(f"step {t} read history from steps {stale}")
        return found


def meta_optimizer(h: HyperNetwork, cfg: TrainerConfig) -> Optimizer:
    """AdamW over the MLP parameters (``lr_meta``) and the output scales (``lr_scale``)."""
    hyper = cfg.hyper
    return AdamW(
        [
            ParamGroup(h.body_parameters(), hyper.lr_meta),
            ParamGroup(h.scale_parameters(), hyper.lr_scale),
        ],
        weight_decay=cfg.weight_decay,
    )


def _edit_step(
    current: ModelWeights,
    h: HyperNetwork,
    batch: RecordBatch,
    t: int,
    hyper: HyperParams,
    rng: Optional[np.random.Generator],
) -> Tuple[EditUpdate, ModelWeights]:
    factors = collect_rank_one_factors(current, [r.edit_sequence for r in batch]).scaled(
        hyper.lr_inner
    )
    update = h.transform(factors, step=t)
    return update, apply_update(current, update, hyper.noise_std, rng)


def rollout(
    weights_0: ModelWeights,
    h: HyperNetwork,
    stream: Sequence[RecordBatch],
    cfg: TrainerConfig,
    access_log: Optional[MarkovAccessLog] = None,
    rng: Optional[np.random.Generator] = None,
    reference: Optional[LocalityReference] = None,
) -> Tuple[Tensor, EpisodeLog]:
    """Edit ``stream`` batch by batch from ``weights_0`` and return the differentiable J.

    Factors are collected under W_{t-1} as constants; the update is added on
    the graph, so J reaches the hypernetwork through every chained edit.
    Backtracking re-scores the last ``k`` batches under W_{t-1} (or W_t when
    ``hyper.backtrack_post_edit`` is set).

    Raises:
        DegenerateInputError: If the stream is empty.
        TrainingFailureError: If any step's reward is not finite.
    """
    if not stream:
        raise DegenerateInputError("rollout needs at least one batch")
    hyper = cfg.effective_hyper()
    if hyper.noise_std > 0 and rng is None:
        rng = np.random.default_rng(cfg.seed)
    reference = reference or LocalityReference(weights_0)
    started = time.perf_counter()

    current = weights_0
    history: Deque[Tuple[int, RecordBatch]] = deque(maxlen=hyper.k or None)
    rewards: List[Tensor] = []
    log = EpisodeLog()

    for t, batch in enumerate(stream, start=1):
        if access_log:
            access_log.read_weights(t, current.version)
        update, edited = _edit_step(current, h, batch, t, hyper, rng)
        base, parts = base_loss(edited, weights_0, batch, hyper.lambda_loc, reference)
        if access_log:
            access_log.read_weights(t, edited.version)

        window = list(history) if hyper.k else []
        scored_under = edited if hyper.backtrack_post_edit else current
        if access_log:
            access_log.read_history(t, [s for s, _ in window])
            if window:
                access_log.read_weights(t, scored_under.version)
        back = backtracking_loss(
            scored_under,
            weights_0,
            [b for _, b in window],
            t,
            hyper.mu,
            hyper.lambda_loc,
            reference,
        )
        reward, breakdown = step_reward(base, back, update, hyper.eta, parts)
        if not breakdown.is_finite():
            raise TrainingFailureError(
                "non-finite reward in rollout", step=t, snapshot=breakdown.as_dict()
            )
        logger.debug(
            "Step %d: l_edit=%.6f l_loc=%.6f l_back=%.6f reg=%.6f r=%.6f",
            t,
            breakdown.l_edit,
            breakdown.l_loc,
            breakdown.l_back,
            breakdown.reg,
            breakdown.r,
        )
        rewards.append(reward)
        log.steps.append(TrajectoryStep(t, batch, update, breakdown))
        if hyper.k:
            history.append((t, batch))
        current = edited

    j = trajectory_return(rewards, hyper.gamma)
    log.j = j.item()
    log.wall_time = time.perf_counter() - started
    return j, log


def _check_return(j: float, epoch: int) -> None:
    if not np.isfinite(j) or abs(j) > DIVERGENCE_LIMIT:
        raise TrainingFailureError(f"trajectory return diverged: J={j}", step=epoch)


class _EarlyStopping:
    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best = -np.inf
        self.stale = 0

    def should_stop(self, value: float) -> bool:
        if value > self.best + self.min_delta:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _meta_step(optimizer: Optimizer, objective: Tensor, grad_clip: float) -> None:
    """Descend on ``-objective``."""
    backward(ops.scale(objective, -1.0))
    clip_grad_norm(optimizer.params, grad_clip)
    optimizer.step()


def train(
    weights_0: ModelWeights,
    h: HyperNetwork,
    sampler: StreamSampler,
    cfg: TrainerConfig,
    checkpoint: Optional[CheckpointCallback] = None,
) -> TrainingResult:
    """Ascend the trajectory return J, one fresh stream per epoch.

    Stops at ``cfg.epochs`` or once J has not improved by ``min_delta`` for
    ``patience`` consecutive epochs. The model always restarts from ``weights_0``.

    Raises:
        TrainingFailureError: If J becomes non-finite or exceeds 1e6 in magnitude.
    """
    h.train()
    optimizer = meta_optimizer(h, cfg)
    reference = LocalityReference(weights_0)
    stopper = _EarlyStopping(cfg.patience, cfg.min_delta)
    log = TrainingLog()

    for epoch in range(1, cfg.epochs + 1):
        stream = sampler.sample(epoch - 1)
        optimizer.zero_grad()
        rng = np.random.default_rng([cfg.seed, epoch]) if cfg.hyper.noise_std > 0 else None
        j, episode = rollout(weights_0, h, stream, cfg, rng=rng, reference=reference)
        _check_return(episode.j, epoch)
        _meta_step(optimizer, j, cfg.hyper.grad_clip)
        log.record(epoch, episode)
        logger.info("Epoch %d/%d: J=%.6f (%.2fs)", epoch, cfg.epochs, episode.j, episode.wall_time)

        if checkpoint and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoint(epoch, h)
        if stopper.should_stop(episode.j):
            logger.info(
                "Early stopping at epoch %d: no J improvement > %g for %d epochs",
                epoch,
                cfg.min_delta,
                cfg.patience,
            )
            log.stopped_early = True
            break

    h.eval()
    return TrainingResult(h, log)


def train_no_rl_baseline(
    weights_0: ModelWeights,
    h: HyperNetwork,
    sampler: StreamSampler,
    cfg: TrainerConfig,
    checkpoint: Optional[CheckpointCallback] = None,
) -> TrainingResult:
    """Single-edit training: each batch is edited from ``weights_0`` and ``-r`` is descended at once.

    There is no trajectory, so no history and no chained edits; the epoch's
    logged J is the sum of its step rewards.
    """
    h.train()
    optimizer = meta_optimizer(h, cfg)
    reference = LocalityReference(weights_0)
    stopper = _EarlyStopping(cfg.patience, cfg.min_delta)
    log = TrainingLog()
    single = dataclasses.replace(cfg, hyper=dataclasses.replace(cfg.hyper, gamma=1.0))

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, epoch]) if cfg.hyper.noise_std > 0 else None
        episode = EpisodeLog()
        for t, batch in enumerate(sampler.sample(epoch - 1), start=1):
            optimizer.zero_grad()
            j, step_log = rollout(weights_0, h, [batch], single, rng=rng, reference=reference)
            _check_return(step_log.j, epoch)
            _meta_step(optimizer, j, cfg.hyper.grad_clip)
            step = step_log.steps[0]
            episode.steps.append(TrajectoryStep(t, batch, step.update, step.breakdown))
        episode.j = float(np.sum([s.breakdown.r for s in episode.steps]))
        episode.wall_time = time.perf_counter() - started
        log.record(epoch, episode)
        logger.info("Epoch %d/%d: sum r=%.6f (%.2fs)", epoch, cfg.epochs, episode.j, episode.wall_time)

        if checkpoint and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoint(epoch, h)
        if stopper.should_stop(episode.j):
            logger.info("Early stopping at epoch %d", epoch)
            log.stopped_early = True
            break

    h.eval()
    return TrainingResult(h, log)
