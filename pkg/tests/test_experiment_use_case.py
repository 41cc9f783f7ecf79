"""Tests for the ablation and sweep experiments."""

import json
from pathlib import Path

import pandas as pd
import pytest

from src.application.editor import EditSessionState
from src.application.experiment_use_case import (
    ABLATION_COLUMNS,
    NORM_COLUMNS,
    SWEEP_COLUMNS,
    ExperimentUseCase,
    mean_step_norm_sq,
    parse_stream_configs,
)
from src.application.pipeline_use_case import TRAINING_LOG_COLUMNS
from src.core.hypernet.network import init_hypernetwork
from src.domain.errors import ConfigurationError
from src.domain.kinds import AblationKind
from src.infrastructure.versioning.manifest_manager import MANIFEST_FILE
from tests.builders import PipelineUseCaseBuilder, RunConfigBuilder


@pytest.fixture
def pipeline():
    """Pipeline backed by the real file stores."""
    return PipelineUseCaseBuilder().build()


@pytest.fixture
def prepared(pipeline, tmp_path):
    """Config whose data and base model exist on disk."""
    config = RunConfigBuilder(str(tmp_path)).build()
    pipeline.gen_data(config)
    pipeline.pretrain(config)
    return config


class TestParseStreamConfigs:
    """Tests for parse_stream_configs function."""

    def test_valid(self):
        """Test the default sweep string."""
        assert parse_stream_configs("10x4,20x4,40x2") == [(10, 4), (20, 4), (40, 2)]

    def test_whitespace(self):
        """Test spaces around entries are ignored."""
        assert parse_stream_configs(" 1x2 , 3x1") == [(1, 2), (3, 1)]

    @pytest.mark.parametrize("spec", ["10", "10x", "x4", "0x4", "10x0", "ax4", "10x-1", ""])
    def test_invalid(self, spec):
        """Test malformed entries are configuration errors."""
        with pytest.raises(ConfigurationError, match="sweep.configs"):
            parse_stream_configs(spec)


class TestMeanStepNormSq:
    """Tests for mean_step_norm_sq function."""

    def test_mean_of_layer_sums(self, tiny_weights):
        """Test per-step norms are summed over layers and averaged over steps."""
        session = EditSessionState(
            tiny_weights, step_norms_sq=[{"a": 1.0, "b": 2.0}, {"a": 0.5, "b": 0.5}]
        )
        assert mean_step_norm_sq(session) == pytest.approx(2.0)

    def test_no_steps(self, tiny_weights):
        """Test an empty session has zero norm."""
        assert mean_step_norm_sq(EditSessionState(tiny_weights)) == 0.0


class TestAblate:
    """Tests for ExperimentUseCase.ablate."""

    def test_one_row_per_variant(self, pipeline, prepared):
        """Test the ablation table, update norms and per-variant logs."""
        result = ExperimentUseCase(pipeline).ablate(prepared)
        out_dir = Path(prepared.paths.out_dir)

        table = pd.read_csv(out_dir / "ablation.csv")
        assert tuple(table.columns) == ABLATION_COLUMNS
        assert list(table["variant"]) == [k.value for k in AblationKind]
        for column in ("efficacy", "generalization", "specificity"):
            assert table[column].between(0.0, 1.0).all()

        norms = pd.read_csv(out_dir / "update_norms.csv")
        assert tuple(norms.columns) == NORM_COLUMNS
        assert (norms["train_update_norm_sq"] >= 0).all()
        assert (norms["edit_update_norm_sq"] >= 0).all()

        for kind in AblationKind:
            log = pd.read_csv(out_dir / kind.value / "training_log.csv")
            assert tuple(log.columns) == TRAINING_LOG_COLUMNS
        assert not (out_dir / "baselines.csv").exists()
        assert (out_dir / "ablation.txt").exists()
        assert len(result.summary["ablation"]) == len(AblationKind)
        manifest = json.loads((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        assert manifest["command"] == "ablate"

    def test_with_baselines(self, pipeline, prepared):
        """Test baselines go to their own table."""
        result = ExperimentUseCase(pipeline).ablate(prepared, with_baselines=True)
        out_dir = Path(prepared.paths.out_dir)
        baselines = pd.read_csv(out_dir / "baselines.csv")
        assert list(baselines["variant"]) == ["fine_tune", "zero_policy"]
        assert len(pd.read_csv(out_dir / "ablation.csv")) == len(AblationKind)
        zero = result.summary["baselines"][1]
        assert zero["specificity"] == 1.0

    def test_is_deterministic(self, pipeline, prepared):
        """Test repeated ablations produce the same table."""
        experiment = ExperimentUseCase(pipeline)
        out_dir = Path(prepared.paths.out_dir)
        experiment.ablate(prepared)
        first = (out_dir / "ablation.csv").read_text(encoding="utf-8")
        experiment.ablate(prepared)
        assert (out_dir / "ablation.csv").read_text(encoding="utf-8") == first


class TestSweep:
    """Tests for ExperimentUseCase.sweep."""

    @pytest.fixture
    def with_zero_policy(self, pipeline, prepared):
        """Config with an untrained hypernetwork checkpoint on disk."""
        h = init_hypernetwork(prepared.model, prepared.hyper.rank, prepared.seed)
        h.eval()
        pipeline.checkpoints.save_hypernetwork(h, prepared.paths.hypernet_path)
        return prepared

    def test_rows_per_configuration(self, pipeline, with_zero_policy):
        """Test one row per stream shape with its edit count."""
        result = ExperimentUseCase(pipeline).sweep(with_zero_policy, [(1, 2), (2, 2), (3, 2)])
        table = pd.read_csv(Path(with_zero_policy.paths.out_dir) / "sweep.csv")
        assert tuple(table.columns) == SWEEP_COLUMNS
        assert list(table["n_edits"]) == [2, 4, 6]
        assert list(table["specificity"]) == [1.0, 1.0, 1.0]
        assert len(result.summary["sweep"]) == 3

    def test_too_long_stream(self, pipeline, with_zero_policy):
        """Test a shape needing more held-out records than exist is rejected."""
        with pytest.raises(ConfigurationError, match="only 6 available"):
            ExperimentUseCase(pipeline).sweep(with_zero_policy, [(4, 2)])

    def test_missing_hypernetwork(self, pipeline, prepared):
        """Test sweeping without a trained hypernetwork fails."""
        with pytest.raises(FileNotFoundError):
            ExperimentUseCase(pipeline).sweep(prepared, [(1, 2)])
