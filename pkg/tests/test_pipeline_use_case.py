"""Tests for the pipeline use case, run end to end on a tiny configuration."""

import dataclasses
import json
from pathlib import Path
from unittest.mock import Mock

import pandas as pd
import pytest

from src.application.pipeline_use_case import (
    EDITED_RECORDS_FILE,
    EVAL_FILE,
    LOCALITY_FILE,
    PRETRAIN_FILE,
    TRAIN_FILE,
    TRAINING_LOG_COLUMNS,
)
from src.application.trainer import TrainingLog, TrainingResult
from src.application.variant_registry import VariantRegistry
from src.domain.config import EditConfig
from src.domain.errors import CheckpointFormatError
from src.domain.kinds import AblationKind
from src.infrastructure.versioning.manifest_manager import MANIFEST_FILE
from tests.builders import PipelineUseCaseBuilder, RunConfigBuilder


@pytest.fixture
def config(tmp_path):
    """Tiny run rooted in a temporary directory."""
    return RunConfigBuilder(str(tmp_path)).build()


@pytest.fixture
def pipeline():
    """Pipeline backed by the real file stores."""
    return PipelineUseCaseBuilder().build()


def _manifest(directory: str):
    return json.loads((Path(directory) / MANIFEST_FILE).read_text(encoding="utf-8"))


class TestGenData:
    """Tests for the gen-data stage."""

    def test_writes_record_files_and_manifest(self, pipeline, config):
        """Test all four data files and the manifest are written."""
        result = pipeline.gen_data(config)
        data_dir = Path(config.paths.data_dir)
        for name in (TRAIN_FILE, EVAL_FILE, PRETRAIN_FILE, LOCALITY_FILE):
            assert (data_dir / name).exists()
        assert len(pipeline.records.load_records(str(data_dir / TRAIN_FILE))) == 6
        assert len(pipeline.load_unrelated(config)) == 8
        manifest = _manifest(config.paths.data_dir)
        assert manifest["command"] == "gen-data"
        assert manifest["seed"] == 3
        assert manifest["sizes"]["eval_records"] == 6
        assert manifest["vocabulary"]["vocab_size"] == 24
        assert result.summary["train_records"] == 6
        assert result.outputs[-1].endswith(MANIFEST_FILE)

    def test_same_seed_same_files(self, pipeline, tmp_path):
        """Test generated files are byte-identical for a fixed seed."""
        first = RunConfigBuilder(str(tmp_path / "a")).build()
        second = RunConfigBuilder(str(tmp_path / "b")).build()
        pipeline.gen_data(first)
        pipeline.gen_data(second)
        for name in (TRAIN_FILE, EVAL_FILE, PRETRAIN_FILE, LOCALITY_FILE):
            a = (Path(first.paths.data_dir) / name).read_bytes()
            b = (Path(second.paths.data_dir) / name).read_bytes()
            assert a == b


class TestPipelineStages:
    """Tests for pretrain, train, edit and evaluate in sequence."""

    @pytest.fixture
    def pretrained(self, pipeline, config):
        """Config whose data and base model exist on disk."""
        pipeline.gen_data(config)
        pipeline.pretrain(config)
        return config

    def test_pretrain_outputs(self, pipeline, pretrained):
        """Test the checkpoint, loss log and manifest of pretraining."""
        weights = pipeline.load_weights_0(pretrained)
        assert weights.config == pretrained.model
        out_dir = Path(pretrained.paths.model_path).parent
        log = pd.read_csv(out_dir / "pretrain_log.csv")
        assert list(log.columns) == ["step", "loss"]
        assert len(log) == 5
        manifest = _manifest(str(out_dir))
        assert list(manifest["inputs"]) == [str(Path(pretrained.paths.data_dir) / PRETRAIN_FILE)]

    def test_train_edit_evaluate(self, pipeline, pretrained):
        """Test the hypernetwork, logs, edited model and metrics are produced."""
        train_result = pipeline.train(pretrained)
        train_dir = Path(pretrained.paths.hypernet_path).parent
        log = pd.read_csv(train_dir / "training_log.csv")
        assert tuple(log.columns) == TRAINING_LOG_COLUMNS
        assert len(log) == 2 * 2
        assert train_result.summary["epochs"] == 2
        assert train_result.summary["variant"] == "none"

        edit_result = pipeline.edit(pretrained)
        edit_dir = Path(pretrained.paths.edited_path).parent
        assert edit_result.summary["applied_steps"] == 2
        assert len(pipeline.records.load_records(str(edit_dir / EDITED_RECORDS_FILE))) == 4
        assert (edit_dir / "update_norms.csv").exists()
        assert not (edit_dir / "retention.csv").exists()

        eval_result = pipeline.evaluate(pretrained)
        out_dir = Path(pretrained.paths.out_dir)
        metrics = pd.read_csv(out_dir / "metrics.csv")
        assert list(metrics["metric"][:3]) == ["efficacy", "generalization", "specificity"]
        assert all(0.0 <= v <= 1.0 for v in metrics["value"])
        text = (out_dir / "metrics.txt").read_text(encoding="utf-8")
        assert "efficacy" in text and "mean edit seconds" in text
        assert len((out_dir / "records.jsonl").read_text(encoding="utf-8").splitlines()) == 4
        assert eval_result.summary["n_edited"] == 4
        assert _manifest(str(out_dir))["command"] == "eval"

    def test_train_is_deterministic(self, pipeline, pretrained):
        """Test two trainings with the same seed write identical logs and checkpoints."""
        pipeline.train(pretrained)
        hypernet = Path(pretrained.paths.hypernet_path)
        first_bytes = hypernet.read_bytes()
        first_log = (hypernet.parent / "training_log.csv").read_text(encoding="utf-8")
        pipeline.train(pretrained)
        assert hypernet.read_bytes() == first_bytes
        assert (hypernet.parent / "training_log.csv").read_text(encoding="utf-8") == first_log

    def test_evaluate_unedited(self, pipeline, pretrained):
        """Test W_0 itself keeps every unrelated answer."""
        result = pipeline.evaluate(pretrained, unedited=True)
        assert result.summary["specificity"] == 1.0
        assert result.summary["n_edited"] == 4

    def test_edit_tracks_retention(self, pipeline, pretrained):
        """Test the retention curve is written when enabled."""
        pipeline.train(pretrained)
        config = dataclasses.replace(pretrained, edit=EditConfig(track_retention=True))
        pipeline.edit(config)
        curve = pd.read_csv(Path(config.paths.edited_path).parent / "retention.csv")
        assert list(curve["step"]) == [1, 2]
        assert list(curve["n_edited"]) == [2, 4]

    def test_resume_and_checkpoints(self, pipeline, pretrained):
        """Test per-epoch checkpoints and resuming from one."""
        config = pretrained.with_overrides({"trainer.checkpoint_every": 1})
        result = pipeline.train(config)
        epoch_path = str(Path(config.paths.hypernet_path).parent / "hypernet_epoch1.rlh")
        assert epoch_path in result.outputs
        resumed = pipeline.train(config, resume_path=epoch_path)
        manifest = _manifest(str(Path(config.paths.hypernet_path).parent))
        assert epoch_path in manifest["inputs"]
        assert resumed.summary["epochs"] == 2

    def test_wrong_architecture_checkpoint(self, pipeline, pretrained):
        """Test a model checkpoint for another shape is rejected."""
        config = pretrained.with_overrides({"model.d_ff": 8})
        with pytest.raises(CheckpointFormatError):
            pipeline.train(config)

    def test_custom_registry(self, pretrained):
        """Test the configured variant's routine is the one called."""
        routine = Mock()
        routine.side_effect = lambda w0, h, sampler, cfg, checkpoint: TrainingResult(
            h, _fake_log()
        )
        registry = VariantRegistry()
        registry.register(AblationKind.NO_RL, routine)
        pipeline = PipelineUseCaseBuilder().with_registry(registry).build()
        config = pretrained.with_overrides({"trainer.ablation": "no_rl"})

        result = pipeline.train(config)
        assert routine.call_count == 1
        assert routine.call_args.args[3].ablation == AblationKind.NO_RL
        assert result.summary["final_j"] == -1.5


def _fake_log() -> TrainingLog:
    log = TrainingLog()
    log.epochs.append({"epoch": 1, "j": -1.5, "wall_time": 0.0})
    log.steps.append(
        {
            "epoch": 1,
            "step": 1,
            "l_edit": 1.0,
            "l_loc": 0.0,
            "l_base": 1.0,
            "l_back": 0.5,
            "reg": 0.0,
            "r": -1.5,
        }
    )
    return log
