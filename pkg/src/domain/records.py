"""Knowledge records and token sequences."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.domain.errors import ContractError

RECORD_FIELDS = ("record_id", "x", "y", "x_e", "y_e", "x_loc", "y_loc")


@dataclass(frozen=True)
class TokenSequence:
    """A prompt followed by its answer span.

    Attributes:
        tokens: Token indices, prompt first.
        prompt_len: Index where the answer span begins.
    """

    tokens: Tuple[int, ...]
    prompt_len: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not 0 < self.prompt_len < len(self.tokens):
            raise ContractError(
                f"prompt_len must satisfy 0 < prompt_len < {len(self.tokens)}, "
                f"got {self.prompt_len}"
            )

    @classmethod
    def from_pair(cls, prompt: Sequence[int], answer: Sequence[int]) -> "TokenSequence":
        """Build a sequence from a prompt and its answer."""
        return cls(tuple(prompt) + tuple(answer), len(prompt))

    @property
    def prompt(self) -> Tuple[int, ...]:
        return self.tokens[: self.prompt_len]

    @property
    def answer(self) -> Tuple[int, ...]:
        return self.tokens[self.prompt_len :]

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self, vocab_size: int, max_seq_len: int) -> None:
        """Check the sequence fits a model's vocabulary and context.

        Raises:
            ContractError: If a token is out of range or the sequence is too long.
        """
        if len(self.tokens) > max_seq_len:
            raise ContractError(f"sequence length {len(self.tokens)} exceeds {max_seq_len}")
        bad = [t for t in self.tokens if not 0 <= t < vocab_size]
        if bad:
            raise ContractError(f"tokens {bad} outside vocabulary of size {vocab_size}")


@dataclass(frozen=True)
class FactTemplate:
    """A synthetic (subject, relation) -> object fact.

    ``subject`` is an ordered pair of distinct subject-pool tokens rather than a
    single token; a pool of p tokens yields p * (p - 1) subjects. Prompts
    read ``[s1 s2 relA SEP]`` and paraphrases ``[relB s1 s2 SEP]``.
    """

    subject: Tuple[int, ...]
    relation: int
    obj: int
    pattern: Tuple[int, ...]
    paraphrase_pattern: Tuple[int, ...]

    @property
    def key(self) -> Tuple[Tuple[int, ...], int]:
        return (self.subject, self.relation)


@dataclass(frozen=True)
class KnowledgeRecord:
    """One edit unit: edit pair, paraphrase pair and locality pair.

    ``y_orig`` is the object the fact had before the counterfactual edit; it
    only feeds the probability-comparison metrics and may be absent.
    """

    record_id: int
    x: Tuple[int, ...]
    y: Tuple[int, ...]
    x_e: Tuple[int, ...]
    y_e: Tuple[int, ...]
    x_loc: Tuple[int, ...]
    y_loc: Tuple[int, ...]
    y_orig: Optional[Tuple[int, ...]] = field(default=None)

    def __post_init__(self) -> None:
        for name in RECORD_FIELDS[1:]:
            object.__setattr__(self, name, tuple(int(t) for t in getattr(self, name)))
        if self.y_orig is not None:
            object.__setattr__(self, "y_orig", tuple(int(t) for t in self.y_orig))

    @property
    def edit_sequence(self) -> TokenSequence:
        return TokenSequence.from_pair(self.x, self.y)

    @property
    def equivalence_sequence(self) -> TokenSequence:
        return TokenSequence.from_pair(self.x_e, self.y_e)

    @property
    def locality_sequence(self) -> TokenSequence:
        return TokenSequence.from_pair(self.x_loc, self.y_loc)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the JSON Lines field layout."""
        data: Dict[str, Any] = {"record_id": self.record_id}
        for name in RECORD_FIELDS[1:]:
            data[name] = list(getattr(self, name))
        if self.y_orig is not None:
            data["y_orig"] = list(self.y_orig)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KnowledgeRecord":
        """Build a record from its JSON Lines dictionary.

        Raises:
            KeyError: If a required field is missing.
            TypeError: If a token array holds non-integers.
        """
        for name in RECORD_FIELDS[1:]:
            values = data[name]
            if not isinstance(values, list) or not all(
                isinstance(t, int) and not isinstance(t, bool) for t in values
            ):
                raise TypeError(f"field '{name}' must be a list of integers")
        record_id = data["record_id"]
        if not isinstance(record_id, int) or isinstance(record_id, bool):
            raise TypeError("field 'record_id' must be an integer")
        y_orig = data.get("y_orig")
        return cls(
            record_id=record_id,
            x=tuple(data["x"]),
            y=tuple(data["y"]),
            x_e=tuple(data["x_e"]),
            y_e=tuple(data["y_e"]),
            x_loc=tuple(data["x_loc"]),
            y_loc=tuple(data["y_loc"]),
            y_orig=tuple(y_orig) if y_orig is not None else None,
        )


RecordBatch = List[KnowledgeRecord]


def partition_stream(records: Sequence[KnowledgeRecord], batch_size: int) -> List[RecordBatch]:
    """Split records into consecutive batches of ``batch_size``.

    The final batch may be shorter; batch sizes always sum to ``len(records)``.
    """
    if batch_size <= 0:
        raise ContractError(f"batch_size must be positive, got {batch_size}")
    return [list(records[i : i + batch_size]) for i in range(0, len(records), batch_size)]
