"""Tests for the synthetic corpus and record streams."""

import pytest

from src.application.corpus import (
    SEP,
    StreamSampler,
    Vocabulary,
    fact_sequences,
    fixed_stream,
    generate_corpus,
)
from src.domain.config import DataConfig
from src.domain.errors import ConfigurationError
from tests.builders import random_records

DATA = DataConfig(
    n_subjects=12,
    n_relations=2,
    subject_pool=6,
    n_train_edits=6,
    n_eval_edits=6,
    n_eval_locality=4,
)


@pytest.fixture
def corpus():
    """Corpus over a 24-token vocabulary."""
    return generate_corpus(DATA, vocab_size=24, seed=5)


class TestVocabulary:
    """Tests for Vocabulary."""

    def test_layout(self):
        """Test relations, subjects and objects occupy consecutive ranges."""
        vocab = Vocabulary(24, n_relations=2, subject_pool=6)
        assert vocab.relation_tokens(0) == (2, 3)
        assert vocab.relation_tokens(1) == (4, 5)
        assert vocab.subject_tokens() == [6, 7, 8, 9, 10, 11]
        assert vocab.object_tokens()[0] == 12 and vocab.n_objects == 12

    def test_surface_forms(self):
        """Test both prompt patterns end in SEP."""
        vocab = Vocabulary(24, n_relations=2, subject_pool=6)
        assert vocab.prompt((6, 7), 1) == (6, 7, 4, SEP)
        assert vocab.paraphrase((6, 7), 1) == (5, 6, 7, SEP)

    def test_too_small_raises(self):
        """Test at least two object tokens are required."""
        with pytest.raises(ConfigurationError, match="model.vocab_size"):
            Vocabulary(13, n_relations=2, subject_pool=6)

    def test_to_dict(self):
        """Test the layout summary written next to the corpus."""
        data = Vocabulary(24, n_relations=2, subject_pool=6).to_dict()
        assert data["relations"] == {"0": [2, 3], "1": [4, 5]}
        assert data["subjects"] == [6, 11]
        assert data["objects"] == [12, 23]


class TestGenerateCorpus:
    """Tests for generate_corpus."""

    def test_split_sizes(self, corpus):
        """Test each set has its configured size and the rest is pretrained."""
        assert corpus.summary() == {
            "pretrain_facts": 8,
            "locality_facts": 4,
            "train_records": 6,
            "eval_records": 6,
        }

    def test_sets_are_disjoint(self, corpus):
        """Test no (subject, relation) appears in two sets."""
        train = {(r.x[:2], r.x[2]) for r in corpus.train_records}
        evaluation = {(r.x[:2], r.x[2]) for r in corpus.eval_records}
        locality = {f.pattern[:3] for f in corpus.locality_facts}
        pretrain = {f.pattern[:3] for f in corpus.pretrain_facts}
        prompts = [r.x[:3] for r in corpus.train_records + corpus.eval_records]
        assert len(train) == 6 and len(evaluation) == 6
        assert not train & evaluation
        assert not set(prompts) & (locality | pretrain)
        assert not locality & pretrain

    def test_records_are_counterfactual(self, corpus):
        """Test every edit target differs from the fact's true object."""
        for record in corpus.train_records + corpus.eval_records:
            assert record.y != record.y_orig
            assert record.y == record.y_e
            assert record.x_e[1:3] == record.x[:2]

    def test_locality_prompts_come_from_pretrained_facts(self, corpus):
        """Test locality pairs are true pretrained facts about other subjects."""
        known = {}
        for fact in corpus.pretrain_facts:
            known[fact.pattern] = fact
            known[fact.paraphrase_pattern] = fact
        for record in corpus.train_records:
            fact = known[record.x_loc]
            assert fact.obj == record.y_loc[0]
            assert fact.subject != record.x[:2]

    def test_subjects_are_token_pairs(self, corpus):
        """Test each subject is two distinct pool tokens leading the prompt."""
        pool = set(corpus.vocabulary.subject_tokens())
        for fact in corpus.pretrain_facts + corpus.locality_facts:
            assert len(fact.subject) == 2
            assert fact.subject[0] != fact.subject[1]
            assert set(fact.subject) <= pool
            assert fact.pattern[:2] == fact.subject
            assert fact.paraphrase_pattern[1:3] == fact.subject

    def test_tokens_fit_the_model(self, corpus):
        """Test every sequence stays inside the vocabulary and is short."""
        for record in corpus.train_records + corpus.eval_records:
            for seq in (record.edit_sequence, record.equivalence_sequence, record.locality_sequence):
                seq.validate(vocab_size=24, max_seq_len=5)

    def test_record_ids_are_consecutive(self, corpus):
        """Test evaluation ids continue after training ids."""
        ids = [r.record_id for r in corpus.train_records + corpus.eval_records]
        assert ids == list(range(12))

    def test_deterministic(self, corpus):
        """Test identical arguments give an identical corpus."""
        assert generate_corpus(DATA, vocab_size=24, seed=5) == corpus
        assert generate_corpus(DATA, vocab_size=24, seed=6) != corpus

    def test_pretraining_sequences_cover_both_forms(self, corpus):
        """Test pretraining sees both surface forms of pretrain and locality facts."""
        assert len(corpus.pretraining_sequences()) == 2 * (8 + 4)
        assert len(corpus.locality_sequences()) == 8
        seqs = fact_sequences(corpus.pretrain_facts[0])
        assert [s.answer for s in seqs] == [(corpus.pretrain_facts[0].obj,)] * 2

    def test_oversized_split_raises(self):
        """Test reserved facts must leave a pretraining set."""
        config = DataConfig(
            n_subjects=4, n_relations=2, subject_pool=6, n_train_edits=4, n_eval_edits=2, n_eval_locality=2
        )
        with pytest.raises(ConfigurationError, match="data.n_subjects"):
            generate_corpus(config, vocab_size=24, seed=0)

    def test_single_subject_raises(self):
        """Test a corpus with one subject has no locality prompt to offer."""
        config = DataConfig(
            n_subjects=1, n_relations=8, subject_pool=6, n_train_edits=2, n_eval_edits=2, n_eval_locality=2
        )
        with pytest.raises(ConfigurationError, match="data.n_subjects"):
            generate_corpus(config, vocab_size=32, seed=0)

    def test_no_other_subject_in_pretrain_set(self):
        """Test an edit whose subject owns the whole pretrain set is a configuration error."""
        config = DataConfig(
            n_subjects=2, n_relations=2, subject_pool=6, n_train_edits=1, n_eval_edits=1, n_eval_locality=1
        )
        raised = 0
        for seed in range(20):
            try:
                generate_corpus(config, vocab_size=24, seed=seed)
            except ConfigurationError as exc:
                assert exc.field == "data.n_subjects"
                raised += 1
        assert raised > 0


class TestStreamSampler:
    """Tests for StreamSampler."""

    def test_epochs_are_reproducible(self):
        """Test the same epoch always gives the same stream."""
        sampler = StreamSampler(random_records(8, 16), batch_size=2, n_batches=3, seed=4)
        first = [[r.record_id for r in b] for b in sampler.sample(0)]
        again = [[r.record_id for r in b] for b in sampler.sample(0)]
        other = [[r.record_id for r in b] for b in sampler.sample(1)]
        assert first == again
        assert first != other
        assert [len(b) for b in sampler.sample(0)] == [2, 2, 2]

    def test_cycles_through_small_record_sets(self):
        """Test a stream longer than the records repeats full permutations."""
        sampler = StreamSampler(random_records(3, 16), batch_size=2, n_batches=4, seed=0)
        ids = [r.record_id for b in sampler.sample(0) for r in b]
        assert len(ids) == 8
        assert sorted(ids[:3]) == [0, 1, 2]
        assert sorted(ids[3:6]) == [0, 1, 2]

    def test_iterates_over_epochs(self):
        """Test iteration yields epoch 0, 1, ... in order."""
        sampler = StreamSampler(random_records(4, 16), batch_size=2, n_batches=2, seed=1)
        iterator = iter(sampler)
        assert next(iterator) == sampler.sample(0)
        assert next(iterator) == sampler.sample(1)

    def test_invalid_arguments_raise(self):
        """Test empty records and empty streams are configuration errors."""
        with pytest.raises(ConfigurationError, match="data.n_train_edits"):
            StreamSampler([], batch_size=2, n_batches=2, seed=0)
        with pytest.raises(ConfigurationError, match="hyper.trajectory_len"):
            StreamSampler(random_records(2, 16), batch_size=2, n_batches=0, seed=0)


class TestFixedStream:
    """Tests for fixed_stream."""

    def test_keeps_file_order(self):
        """Test the first records are batched in order."""
        stream = fixed_stream(random_records(7, 16), n_batches=3, batch_size=2)
        assert [[r.record_id for r in b] for b in stream] == [[0, 1], [2, 3], [4, 5]]

    def test_not_enough_records_raises(self):
        """Test a stream longer than the record set is rejected."""
        with pytest.raises(ConfigurationError, match="need 8 records, only 7"):
            fixed_stream(random_records(7, 16), n_batches=4, batch_size=2)
