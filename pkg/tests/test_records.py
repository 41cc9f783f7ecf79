"""Tests for token sequences and knowledge records."""

import pytest

from src.domain.errors import ContractError
from src.domain.records import KnowledgeRecord, TokenSequence, partition_stream
from tests.builders import RecordBuilder, random_records


class TestTokenSequence:
    """Tests for TokenSequence."""

    def test_from_pair(self):
        """Test prompt and answer split at prompt_len."""
        seq = TokenSequence.from_pair([3, 4, 1], [9, 10])
        assert seq.tokens == (3, 4, 1, 9, 10)
        assert seq.prompt == (3, 4, 1)
        assert seq.answer == (9, 10)
        assert len(seq) == 5

    @pytest.mark.parametrize("prompt_len", [0, 3])
    def test_needs_prompt_and_answer(self, prompt_len):
        """Test both spans must be non-empty."""
        with pytest.raises(ContractError):
            TokenSequence((1, 2, 3), prompt_len)

    def test_validate(self):
        """Test vocabulary and context limits."""
        seq = TokenSequence.from_pair([3, 4], [9])
        seq.validate(vocab_size=10, max_seq_len=3)
        with pytest.raises(ContractError, match="outside vocabulary"):
            seq.validate(vocab_size=9, max_seq_len=3)
        with pytest.raises(ContractError, match="exceeds 2"):
            seq.validate(vocab_size=10, max_seq_len=2)


class TestKnowledgeRecord:
    """Tests for KnowledgeRecord."""

    def test_sequences(self):
        """Test the three derived sequences."""
        record = RecordBuilder().build()
        assert record.edit_sequence == TokenSequence.from_pair((2, 3, 1), (7,))
        assert record.equivalence_sequence == TokenSequence.from_pair((4, 2, 1), (7,))
        assert record.locality_sequence == TokenSequence.from_pair((5, 6, 1), (9,))

    def test_dict_layout(self):
        """Test the JSON Lines layout, with y_orig only when present."""
        data = RecordBuilder().with_record_id(4).build().to_dict()
        assert data == {
            "record_id": 4,
            "x": [2, 3, 1],
            "y": [7],
            "x_e": [4, 2, 1],
            "y_e": [7],
            "x_loc": [5, 6, 1],
            "y_loc": [9],
        }
        assert RecordBuilder().with_original([8]).build().to_dict()["y_orig"] == [8]

    def test_from_dict(self):
        """Test a dictionary with y_orig restores the record."""
        record = RecordBuilder().with_record_id(2).with_original([8]).build()
        assert KnowledgeRecord.from_dict(record.to_dict()) == record

    def test_from_dict_rejects_bad_tokens(self):
        """Test token arrays must hold integers only."""
        data = RecordBuilder().build().to_dict()
        data["y"] = [True]
        with pytest.raises(TypeError, match="'y'"):
            KnowledgeRecord.from_dict(data)
        data["y"] = "7"
        with pytest.raises(TypeError):
            KnowledgeRecord.from_dict(data)

    def test_from_dict_missing_field(self):
        """Test a missing field raises KeyError."""
        data = RecordBuilder().build().to_dict()
        del data["x_loc"]
        with pytest.raises(KeyError):
            KnowledgeRecord.from_dict(data)

    def test_from_dict_rejects_non_integer_id(self):
        """Test record_id must be an integer."""
        data = RecordBuilder().build().to_dict()
        data["record_id"] = "0"
        with pytest.raises(TypeError, match="record_id"):
            KnowledgeRecord.from_dict(data)


class TestPartitionStream:
    """Tests for partition_stream."""

    def test_last_batch_may_be_short(self):
        """Test batch sizes sum to the record count."""
        batches = partition_stream(random_records(5, 16), 2)
        assert [len(b) for b in batches] == [2, 2, 1]
        assert [r.record_id for b in batches for r in b] == [0, 1, 2, 3, 4]

    def test_empty(self):
        """Test no records give no batches."""
        assert partition_stream([], 3) == []

    def test_non_positive_batch_size_raises(self):
        """Test batch_size must be positive."""
        with pytest.raises(ContractError):
            partition_stream(random_records(2, 16), 0)
