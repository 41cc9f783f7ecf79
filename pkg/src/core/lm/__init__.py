"""Toy autoregressive language model: the editable model and its scoring functions."""

from src.core.lm.factors import LayerFactors, RankOneFactors, collect_rank_one_factors
from src.core.lm.model import ModelWeights, PackedBatch, forward, init_weights
from src.core.lm.scoring import (
    answer_kl,
    answer_log_probs,
    answer_nll,
    greedy_decode,
    greedy_decode_batch,
    mean_answer_nll,
)
from src.core.lm.training import PretrainResult, pretrain

__all__ = [
    "LayerFactors",
    "ModelWeights",
    "PackedBatch",
    "PretrainResult",
    "RankOneFactors",
    "answer_kl",
    "answer_log_probs",
    "answer_nll",
    "collect_rank_one_factors",
    "forward",
    "greedy_decode",
    "greedy_decode_batch",
    "init_weights",
    "mean_answer_nll",
    "pretrain",
]
