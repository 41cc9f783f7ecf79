"""Efficacy, Generalization and Specificity of an edited model."""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.lm.model import ModelWeights
from src.core.lm.scoring import answer_log_probs, greedy_decode_batch
from src.domain.errors import DegenerateInputError
from src.domain.records import KnowledgeRecord, TokenSequence

logger = logging.getLogger(__name__)

METRIC_NAMES = ("efficacy", "generalization", "specificity")
PROB_METRIC_NAMES = ("prob_efficacy", "prob_generalization", "prob_specificity")


@dataclass(frozen=True)
class RecordOutcome:
    """Pass/fail of one edited record under exact-match greedy decoding.

    ``specificity`` compares the record's own locality prompt before and after editing.
    """

    record_id: int
    efficacy: bool
    generalization: bool
    specificity: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class MetricsReport:
    """Aggregate editing metrics over an evaluated record set.

    The ``prob_*`` family compares answer probabilities instead of decoding;
    the first two are ``None`` when no record carries its original object.
    """

    efficacy: float
    generalization: float
    specificity: float
    n_edited: int
    n_unrelated: int
    records: List[RecordOutcome] = field(default_factory=list)
    mean_edit_seconds: float = 0.0
    prob_efficacy: Optional[float] = None
    prob_generalization: Optional[float] = None
    prob_specificity: Optional[float] = None

    def summary(self) -> Dict[str, Any]:
        return {
            "efficacy": self.efficacy,
            "generalization": self.generalization,
            "specificity": self.specificity,
            "prob_efficacy": self.prob_efficacy,
            "prob_generalization": self.prob_generalization,
            "prob_specificity": self.prob_specificity,
            "n_edited": self.n_edited,
            "n_unrelated": self.n_unrelated,
            "mean_edit_seconds": self.mean_edit_seconds,
        }

    def rows(self) -> List[Dict[str, Any]]:
        """``metric, value, n_records`` rows.

        Absent probability metrics and the wall-clock edit time are left out.
        """
        rows = [
            {"metric": "efficacy", "value": self.efficacy, "n_records": self.n_edited},
            {"metric": "generalization", "value": self.generalization, "n_records": self.n_edited},
            {"metric": "specificity", "value": self.specificity, "n_records": self.n_unrelated},
        ]
        for name in PROB_METRIC_NAMES:
            value = getattr(self, name)
            if value is not None:
                rows.append({"metric": name, "value": value, "n_records": self.n_edited})
        return rows


def exact_matches(
    weights: ModelWeights, prompts: Sequence[Tuple[int, ...]], answers: Sequence[Tuple[int, ...]]
) -> List[bool]:
    """Whether each prompt's greedy continuation reproduces its whole answer."""
    if not prompts:
        return []
    max_new = max(len(a) for a in answers)
    decoded = greedy_decode_batch(weights, prompts, max_new)
    return [tuple(d[: len(a)]) == tuple(a) for d, a in zip(decoded, answers)]


def decode_answers(weights: ModelWeights, sequences: Sequence[TokenSequence]) -> List[Tuple[int, ...]]:
    """Greedy decode of each sequence's prompt, truncated to its answer length."""
    if not sequences:
        return []
    max_new = max(len(s.answer) for s in sequences)
    decoded = greedy_decode_batch(weights, [s.prompt for s in sequences], max_new)
    return [tuple(d[: len(s.answer)]) for d, s in zip(decoded, sequences)]


def _fraction(passes: Sequence[bool]) -> float:
    return float(np.mean(passes)) if len(passes) else 0.0


def _prob_wins(
    weights: ModelWeights,
    prompts: Sequence[Tuple[int, ...]],
    preferred: Sequence[Tuple[int, ...]],
    rival: Sequence[Tuple[int, ...]],
) -> Optional[float]:
    if not prompts:
        return None
    first = [TokenSequence.from_pair(p, a) for p, a in zip(prompts, preferred)]
    second = [TokenSequence.from_pair(p, a) for p, a in zip(prompts, rival)]
    scores = answer_log_probs(weights, first + second)
    n = len(prompts)
    return float(np.mean(scores[:n] > scores[n:]))


def probability_metrics(
    weights: ModelWeights, edited: Sequence[KnowledgeRecord]
) -> Dict[str, Optional[float]]:
    """Probability-comparison metrics.

    Efficacy and Generalization count records where the new object outscores
    the original one; Specificity counts locality prompts where their own answer
    outscores the record's new object.
    """
    with_orig = [r for r in edited if r.y_orig is not None]
    return {
        "prob_efficacy": _prob_wins(
            weights,
            [r.x for r in with_orig],
            [r.y for r in with_orig],
            [r.y_orig for r in with_orig],  # type: ignore[misc]
        ),
        "prob_generalization": _prob_wins(
            weights,
            [r.x_e for r in with_orig],
            [r.y_e for r in with_orig],
            [r.y_orig for r in with_orig],  # type: ignore[misc]
        ),
        "prob_specificity": _prob_wins(
            weights, [r.x_loc for r in edited], [r.y_loc for r in edited], [r.y for r in edited]
        ),
    }


def evaluate(
    weights_final: ModelWeights,
    weights_0: ModelWeights,
    edited: Sequence[KnowledgeRecord],
    unrelated: Sequence[TokenSequence],
    mean_edit_seconds: float = 0.0,
    reference_answers: Optional[Sequence[Tuple[int, ...]]] = None,
) -> MetricsReport:
    """Score an edited model.

    Args:
        weights_final: Weights after the edit stream.
        weights_0: Pretrained snapshot; Specificity's reference decode.
        edited: Every record that was edited.
        unrelated: Held-out locality sequences.
        mean_edit_seconds: Carried into the report.
        reference_answers: Precomputed ``weights_0`` decodes of ``unrelated``.

    Returns:
        The report with per-record outcomes.

    Raises:
        DegenerateInputError: If either record set is empty.
    """
    if not edited or not unrelated:
        raise DegenerateInputError("evaluation needs edited records and unrelated prompts")

    efficacy = exact_matches(weights_final, [r.x for r in edited], [r.y for r in edited])
    generalization = exact_matches(weights_final, [r.x_e for r in edited], [r.y_e for r in edited])
    locality = [r.locality_sequence for r in edited]
    record_loc = [
        a == b
        for a, b in zip(decode_answers(weights_final, locality), decode_answers(weights_0, locality))
    ]

    if reference_answers is None:
        reference_answers = decode_answers(weights_0, unrelated)
    reference = list(reference_answers)
    specificity = [a == b for a, b in zip(decode_answers(weights_final, unrelated), reference)]

    outcomes = [
        RecordOutcome(r.record_id, e, g, s)
        for r, e, g, s in zip(edited, efficacy, generalization, record_loc)
    ]
    report = MetricsReport(
        efficacy=_fraction(efficacy),
        generalization=_fraction(generalization),
        specificity=_fraction(specificity),
        n_edited=len(edited),
        n_unrelated=len(unrelated),
        records=outcomes,
        mean_edit_seconds=mean_edit_seconds,
        **probability_metrics(weights_final, edited),
    )
    logger.info(
        "Metrics: efficacy=%.4f generalization=%.4f specificity=%.4f (%d edited, %d unrelated)",
        report.efficacy,
        report.generalization,
        report.specificity,
        report.n_edited,
        report.n_unrelated,
    )
    return report


class RetentionCurve:
    """Metrics over every record edited so far, recorded after each edit step."""

    def __init__(self, weights_0: ModelWeights, unrelated: Sequence[TokenSequence]):
        self.unrelated = list(unrelated)
        self.reference = decode_answers(weights_0, self.unrelated)
        self.points: List[Dict[str, Any]] = []

    def __call__(self, step: int, weights: ModelWeights, edited: Sequence[KnowledgeRecord]) -> None:
        efficacy = exact_matches(weights, [r.x for r in edited], [r.y for r in edited])
        generalization = exact_matches(weights, [r.x_e for r in edited], [r.y_e for r in edited])
        current = decode_answers(weights, self.unrelated)
        specificity = [a == b for a, b in zip(current, self.reference)]
        self.points.append(
            {
                "step": step,
                "n_edited": len(edited),
                "efficacy": _fraction(efficacy),
                "generalization": _fraction(generalization),
                "specificity": _fraction(specificity),
            }
        )
