"""JSON Lines persistence for knowledge records and token sequences."""

import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, TypeVar

from src.domain.errors import ContractError, RecordParseError
from src.domain.interfaces import RecordStore
from src.domain.records import KnowledgeRecord, TokenSequence

T = TypeVar("T")


def _sequence_from_dict(data: Dict[str, Any]) -> TokenSequence:
    prompt, answer = data["x"], data["y"]
    if not isinstance(prompt, list) or not isinstance(answer, list):
        raise TypeError("fields 'x' and 'y' must be lists of integers")
    return TokenSequence.from_pair(prompt, answer)


class JsonLinesRecordStore(RecordStore):
    """One JSON object per line, UTF-8, with compact separators.

    Records use the fields ``record_id, x, y, x_e, y_e, x_loc, y_loc`` (plus
    ``y_orig`` when known); bare token sequences use ``x, y``.
    """

    def save_records(self, records: Sequence[KnowledgeRecord], path: str) -> None:
        """Write records to a JSON Lines file.

        Args:
            records: Records to persist.
            path: Destination file path; parent directories are created.
        """
        self._write([r.to_dict() for r in records], path)

    def load_records(self, path: str) -> List[KnowledgeRecord]:
        """Read records from a JSON Lines file.

        Args:
            path: Source file path.

        Returns:
            Records in file order; an empty file yields an empty list.

        Raises:
            FileNotFoundError: If the file does not exist.
            RecordParseError: If a line is not a valid record.
        """
        return self._read(path, KnowledgeRecord.from_dict)

    def save_sequences(self, sequences: Sequence[TokenSequence], path: str) -> None:
        """Write prompt/answer sequences as ``{"x": [...], "y": [...]}`` lines."""
        self._write([{"x": list(s.prompt), "y": list(s.answer)} for s in sequences], path)

    def load_sequences(self, path: str) -> List[TokenSequence]:
        """Read sequences written by ``save_sequences``.

        Raises:
            FileNotFoundError: If the file does not exist.
            RecordParseError: If a line is not a valid sequence.
        """
        return self._read(path, _sequence_from_dict)

    def _write(self, rows: List[Dict[str, Any]], path: str) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(json.dumps(row, separators=(",", ":")))
                f.write("\n")

    def _read(self, path: str, build: Callable[[Dict[str, Any]], T]) -> List[T]:
        items: List[T] = []
        with open(path, encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                    if not isinstance(data, dict):
                        raise TypeError("line is not a JSON object")
                    items.append(build(data))
                except json.JSONDecodeError as exc:
                    raise RecordParseError(path, line_number, f"invalid JSON: {exc.msg}") from exc
                except KeyError as exc:
                    raise RecordParseError(path, line_number, f"missing field {exc}") from exc
                except (TypeError, ContractError) as exc:
                    raise RecordParseError(path, line_number, str(exc)) from exc
        return items
