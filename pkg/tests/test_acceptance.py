"""End-to-end runs on the desk preset.

Deselected by default; run with ``pytest -m slow``.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.application.editor import edit_stream
from src.application.experiment_use_case import ExperimentUseCase
from src.cli import PRESETS_DIR
from src.core.hypernet.network import init_hypernetwork
from src.domain.records import partition_stream
from src.infrastructure.config_loader import YamlConfigLoader, load_run_config
from tests.builders import PipelineUseCaseBuilder, random_records, random_weights

pytestmark = pytest.mark.slow


def _desk_config(root: Path, seed: int = 0, **overrides):
    paths = {
        "paths.data_dir": str(root / "data"),
        "paths.model_path": str(root / "pretrain" / "model.rle"),
        "paths.hypernet_path": str(root / "train" / "hypernet.rlh"),
        "paths.edited_path": str(root / "edit" / "edited.rle"),
        "paths.out_dir": str(root / "out"),
        "trainer.seed": seed,
    }
    paths.update(overrides)
    return load_run_config(YamlConfigLoader(str(PRESETS_DIR)), preset="desk", overrides=paths)


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """Desk preset run through gen-data, pretrain, train, edit and eval."""
    root = tmp_path_factory.mktemp("desk")
    config = _desk_config(root)
    pipeline = PipelineUseCaseBuilder().build()
    pipeline.gen_data(config)
    pipeline.pretrain(config)
    pipeline.train(config)
    pipeline.edit(config)
    report = pipeline.evaluate(config).summary
    unedited = pipeline.evaluate(
        config.with_overrides({"paths.out_dir": str(root / "unedited")}), unedited=True
    ).summary
    return pipeline, config, report, unedited


class TestLifelongEditing:
    """Tests for editing quality of the trained hypernetwork."""

    def test_trained_editor_thresholds(self, desk_run):
        """Test efficacy, generalization and specificity on the held-out stream."""
        _, _, report, _ = desk_run
        assert report["efficacy"] >= 0.90
        assert report["generalization"] >= 0.75
        assert report["specificity"] >= 0.80

    def test_unedited_model_misses_counterfactuals(self, desk_run):
        """Test W_0 does not already produce the new objects."""
        _, _, _, unedited = desk_run
        assert unedited["efficacy"] <= 0.05

    def test_ablation_direction(self, desk_run):
        """Test each removed component hurts in the expected direction."""
        pipeline, config, _, _ = desk_run
        ExperimentUseCase(pipeline).ablate(config)
        out_dir = Path(config.paths.out_dir)
        table = pd.read_csv(out_dir / "ablation.csv").set_index("variant")
        norms = pd.read_csv(out_dir / "update_norms.csv").set_index("variant")

        full = table.loc["none"]
        assert full["efficacy"] - table.loc["no_rl", "efficacy"] >= 0.2
        no_back = table.loc["no_backtracking"]
        assert no_back["efficacy"] < full["efficacy"] or no_back["generalization"] < full["generalization"]
        assert (
            norms.loc["no_regularization", "edit_update_norm_sq"]
            > norms.loc["none", "edit_update_norm_sq"]
        )


class TestDeterminism:
    """Tests for bitwise reproducibility of whole runs."""

    def test_two_runs_match(self, tmp_path):
        """Test identical seeds give identical metrics and edited weights."""
        artifacts = []
        for name in ("a", "b"):
            config = _desk_config(tmp_path / name, seed=7, **{"trainer.epochs": 3, "pretrain.steps": 300})
            pipeline = PipelineUseCaseBuilder().build()
            pipeline.gen_data(config)
            pipeline.pretrain(config)
            pipeline.train(config)
            pipeline.edit(config)
            pipeline.evaluate(config)
            artifacts.append(
                (
                    (Path(config.paths.out_dir) / "metrics.csv").read_bytes(),
                    Path(config.paths.edited_path).read_bytes(),
                )
            )
        assert artifacts[0] == artifacts[1]


class TestEditCost:
    """Tests for the per-edit cost over a long stream."""

    def test_constant_cost_and_frozen_hypernetwork(self):
        """Test late edits are no slower than early ones and editing leaves θ alone."""
        config = _desk_config(Path("unused")).model
        weights_0 = random_weights(config, seed=0)
        h = init_hypernetwork(config, rank=32, seed=0)
        rng = np.random.default_rng(1)
        for p in h.parameters():
            p.values[...] = rng.normal(scale=0.05, size=p.shape)
        before = {k: v.tobytes() for k, v in h.state_dict().items()}

        stream = partition_stream(random_records(800, config.vocab_size, seed=2), 4)
        _, session = edit_stream(weights_0, h, stream)

        assert session.applied_steps == 200
        first = np.median(session.step_seconds[:20])
        last = np.median(session.step_seconds[-20:])
        assert last <= 2.0 * first
        assert {k: v.tobytes() for k, v in h.state_dict().items()} == before
