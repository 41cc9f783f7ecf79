"""Synthetic fact corpus and the record streams derived from it."""

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from src.domain.config import DataConfig
from src.domain.errors import ConfigurationError
from src.domain.records import (
    FactTemplate,
    KnowledgeRecord,
    RecordBatch,
    TokenSequence,
    partition_stream,
)

logger = logging.getLogger(__name__)

PAD = 0
SEP = 1


@dataclass(frozen=True)
class Vocabulary:
    """Token layout: PAD, SEP, two surface tokens per relation, subject pool, objects."""

    vocab_size: int
    n_relations: int
    subject_pool: int

    def __post_init__(self) -> None:
        if self.n_objects < 2:
            raise ConfigurationError(
                "model.vocab_size",
                f"vocabulary of {self.vocab_size} leaves {self.n_objects} object tokens after "
                f"{self.n_relations} relations and a subject pool of {self.subject_pool}; need >= 2",
            )

    @property
    def first_subject(self) -> int:
        return 2 + 2 * self.n_relations

    @property
    def first_object(self) -> int:
        return self.first_subject + self.subject_pool

    @property
    def n_objects(self) -> int:
        return self.vocab_size - self.first_object

    def relation_tokens(self, relation: int) -> Tuple[int, int]:
        """The two surface tokens of ``relation``: pattern A, pattern B."""
        return 2 + 2 * relation, 3 + 2 * relation

    def subject_tokens(self) -> List[int]:
        return list(range(self.first_subject, self.first_object))

    def object_tokens(self) -> List[int]:
        return list(range(self.first_object, self.vocab_size))

    def prompt(self, subject: Tuple[int, ...], relation: int) -> Tuple[int, ...]:
        """Pattern A: ``[s1 s2 relA SEP]``."""
        return tuple(subject) + (self.relation_tokens(relation)[0], SEP)

    def paraphrase(self, subject: Tuple[int, ...], relation: int) -> Tuple[int, ...]:
        """Pattern B: ``[relB s1 s2 SEP]``."""
        return (self.relation_tokens(relation)[1],) + tuple(subject) + (SEP,)

    def fact(self, subject: Tuple[int, ...], relation: int, obj: int) -> FactTemplate:
        return FactTemplate(
            subject=tuple(subject),
            relation=relation,
            obj=obj,
            pattern=self.prompt(subject, relation),
            paraphrase_pattern=self.paraphrase(subject, relation),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vocab_size": self.vocab_size,
            "pad": PAD,
            "sep": SEP,
            "relations": {
                str(r): list(self.relation_tokens(r)) for r in range(self.n_relations)
            },
            "subjects": [self.first_subject, self.first_object - 1],
            "objects": [self.first_object, self.vocab_size - 1],
        }


def fact_sequences(fact: FactTemplate) -> List[TokenSequence]:
    """Both surface forms of a fact with its object as the answer."""
    return [
        TokenSequence.from_pair(fact.pattern, (fact.obj,)),
        TokenSequence.from_pair(fact.paraphrase_pattern, (fact.obj,)),
    ]


@dataclass(frozen=True)
class Corpus:
    """Every set the pipeline needs, pairwise disjoint on ``(subject, relation)``.

    Attributes:
        vocabulary: Token layout.
        pretrain_facts: True facts the base model learns; record locality prompts come from here.
        locality_facts: Also pretrained, but reserved for the Specificity evaluation.
        train_records: Counterfactual edits for hypernetwork training.
        eval_records: Held-out counterfactual edits for evaluation.
    """

    vocabulary: Vocabulary
    pretrain_facts: Tuple[FactTemplate, ...]
    locality_facts: Tuple[FactTemplate, ...]
    train_records: Tuple[KnowledgeRecord, ...]
    eval_records: Tuple[KnowledgeRecord, ...]

    def pretraining_sequences(self) -> List[TokenSequence]:
        facts = self.pretrain_facts + self.locality_facts
        return [seq for fact in facts for seq in fact_sequences(fact)]

    def locality_sequences(self) -> List[TokenSequence]:
        return [seq for fact in self.locality_facts for seq in fact_sequences(fact)]

    def summary(self) -> Dict[str, int]:
        return {
            "pretrain_facts": len(self.pretrain_facts),
            "locality_facts": len(self.locality_facts),
            "train_records": len(self.train_records),
            "eval_records": len(self.eval_records),
        }


def _edit_record(
    record_id: int,
    fact: FactTemplate,
    locality: FactTemplate,
    vocabulary: Vocabulary,
    rng: np.random.Generator,
) -> KnowledgeRecord:
    alternatives = [o for o in vocabulary.object_tokens() if o != fact.obj]
    target = int(alternatives[rng.integers(len(alternatives))])
    loc_prompt = locality.pattern if rng.integers(2) == 0 else locality.paraphrase_pattern
    return KnowledgeRecord(
        record_id=record_id,
        x=fact.pattern,
        y=(target,),
        x_e=fact.paraphrase_pattern,
        y_e=(target,),
        x_loc=loc_prompt,
        y_loc=(locality.obj,),
        y_orig=(fact.obj,),
    )


def generate_corpus(config: DataConfig, vocab_size: int, seed: int) -> Corpus:
    """Generate facts, split them and derive counterfactual edit records.

    Args:
        config: Set sizes and subject pool.
        vocab_size: Model vocabulary the tokens must fit in.
        seed: Seed for every random choice.

    Returns:
        The corpus; identical for identical arguments.

    Raises:
        ConfigurationError: If the sizes do not fit the vocabulary or each other.
    """
    config.validate()
    vocabulary = Vocabulary(vocab_size, config.n_relations, config.subject_pool)
    rng = np.random.default_rng(seed)

    # each subject is a pair of pool tokens
    pairs = list(itertools.permutations(vocabulary.subject_tokens(), 2))
    chosen = sorted(rng.choice(len(pairs), size=config.n_subjects, replace=False))
    subjects = [pairs[i] for i in chosen]
    objects = vocabulary.object_tokens()
    facts = [
        vocabulary.fact(subject, relation, int(objects[rng.integers(len(objects))]))
        for subject in subjects
        for relation in range(config.n_relations)
    ]

    order = [facts[i] for i in rng.permutation(len(facts))]
    a = config.n_train_edits
    b = a + config.n_eval_edits
    c = b + config.n_eval_locality
    train_facts, eval_facts, locality_facts, pretrain_facts = order[:a], order[a:b], order[b:c], order[c:]

    def records(edit_facts: Sequence[FactTemplate], first_id: int) -> List[KnowledgeRecord]:
        out = []
        for offset, fact in enumerate(edit_facts):
            candidates = [f for f in pretrain_facts if f.subject != fact.subject]
            if not candidates:
                raise ConfigurationError(
                    "data.n_subjects",
                    f"no pretrained fact has a subject other than {fact.subject} to use as a locality prompt",
                )
            locality = candidates[rng.integers(len(candidates))]
            out.append(_edit_record(first_id + offset, fact, locality, vocabulary, rng))
        return out

    train_records = records(train_facts, 0)
    eval_records = records(eval_facts, len(train_records))
    corpus = Corpus(
        vocabulary=vocabulary,
        pretrain_facts=tuple(pretrain_facts),
        locality_facts=tuple(locality_facts),
        train_records=tuple(train_records),
        eval_records=tuple(eval_records),
    )
    logger.info("Generated corpus: %s", corpus.summary())
    return corpus


class StreamSampler:
    """Seeded source of shuffled record-batch sequences, one per epoch.

    Epoch ``e`` draws from ``default_rng([seed, e])``, so any epoch can be
    reproduced on its own.
    """

    def __init__(
        self,
        records: Sequence[KnowledgeRecord],
        batch_size: int,
        n_batches: int,
        seed: int,
    ):
        if not records:
            raise ConfigurationError("data.n_train_edits", "training stream is empty")
        if n_batches < 1:
            raise ConfigurationError("hyper.trajectory_len", "must be >= 1")
        self.records = list(records)
        self.batch_size = batch_size
        self.n_batches = n_batches
        self.seed = seed

    def sample(self, epoch: int) -> List[RecordBatch]:
        """A stream of ``n_batches`` batches, cycling through fresh permutations as needed."""
        rng = np.random.default_rng([self.seed, epoch])
        needed = self.batch_size * self.n_batches
        picked: List[KnowledgeRecord] = []
        while len(picked) < needed:
            picked.extend(self.records[i] for i in rng.permutation(len(self.records)))
        return partition_stream(picked[:needed], self.batch_size)

    def __iter__(self) -> Iterator[List[RecordBatch]]:
        for epoch in itertools.count():
            yield self.sample(epoch)


def fixed_stream(
    records: Sequence[KnowledgeRecord], n_batches: int, batch_size: int
) -> List[RecordBatch]:
    """The first ``n_batches * batch_size`` records in file order, batched.

    Raises:
        ConfigurationError: If there are not enough records.
    """
    needed = n_batches * batch_size
    if n_batches < 1 or batch_size < 1:
        raise ConfigurationError("hyper.trajectory_len", "stream needs at least one batch")
    if needed > len(records):
        raise ConfigurationError(
            "hyper.trajectory_len",
            f"{n_batches} batches of {batch_size} need {needed} records, only {len(records)} available",
        )
    return partition_stream(list(records[:needed]), batch_size)
