"""Tests for CLI."""

import json
from unittest.mock import Mock, patch

import pytest
import yaml

from src.application.pipeline_use_case import CommandResult
from src.cli import (
    EXIT_CONFIG,
    EXIT_ERROR,
    EXIT_INTERRUPTED,
    EXIT_MISSING_FILE,
    EXIT_TRAINING,
    _flag_overrides,
    _handle_error,
    build_parser,
    main,
    run,
)
from src.domain.errors import (
    CheckpointFormatError,
    ConfigurationError,
    RecordParseError,
    TrainingFailureError,
)
from src.domain.kinds import AblationKind


def _parse(*argv):
    return build_parser().parse_args(list(argv))


class TestBuildParser:
    """Tests for build_parser function."""

    def test_seed_is_required(self):
        """Test every command needs --seed."""
        with pytest.raises(SystemExit):
            _parse("train")

    def test_command_specific_flags(self):
        """Test flags that only some commands accept."""
        assert _parse("train", "--seed", "1", "--resume", "h.rlh").resume == "h.rlh"
        assert _parse("eval", "--seed", "1", "--unedited").unedited
        args = _parse("ablate", "--seed", "1", "--workers", "3", "--with-baselines")
        assert args.workers == 3 and args.with_baselines
        assert _parse("sweep", "--seed", "1").configs == "10x4,20x4,40x2"

    def test_unknown_ablation_rejected(self):
        """Test --ablation only accepts known variants."""
        with pytest.raises(SystemExit):
            _parse("train", "--seed", "1", "--ablation", "everything")

    @pytest.mark.parametrize("preset", ["desk", "paper"])
    def test_preset_choices(self, preset):
        """Test both shipped presets are accepted by name."""
        assert _parse("train", "--seed", "1", "--preset", preset).preset == preset

    def test_unknown_preset_rejected(self):
        """Test --preset only accepts shipped presets."""
        with pytest.raises(SystemExit):
            _parse("train", "--seed", "1", "--preset", "full")


class TestFlagOverrides:
    """Tests for _flag_overrides function."""

    def test_seed_only(self):
        """Test the seed is always an override."""
        assert _flag_overrides(_parse("gen-data", "--seed", "4")) == {"trainer.seed": 4}

    def test_stream_flags(self):
        """Test stream, batch and ablation flags map to their keys."""
        args = _parse(
            "train", "--seed", "1", "--stream-len", "10", "--batch-size", "2", "--ablation", "no_rl"
        )
        assert _flag_overrides(args) == {
            "trainer.seed": 1,
            "hyper.trajectory_len": 10,
            "hyper.batch_size": 2,
            "trainer.ablation": "no_rl",
        }

    @pytest.mark.parametrize(
        "command,key,value",
        [
            ("gen-data", "paths.data_dir", "runs/x"),
            ("pretrain", "paths.model_path", "runs/x/model.rle"),
            ("train", "paths.hypernet_path", "runs/x/hypernet.rlh"),
            ("edit", "paths.edited_path", "runs/x/edited.rle"),
            ("eval", "paths.out_dir", "runs/x"),
        ],
    )
    def test_out_targets(self, command, key, value):
        """Test --out lands on the command's output path."""
        assert _flag_overrides(_parse(command, "--seed", "0", "--out", "runs/x"))[key] == value

    def test_set_entries(self):
        """Test --set values are parsed as YAML scalars."""
        args = _parse("train", "--seed", "0", "--set", "hyper.mu=0.9", "--set", "hyper.k = 3")
        overrides = _flag_overrides(args)
        assert overrides["hyper.mu"] == 0.9
        assert overrides["hyper.k"] == 3

    def test_malformed_set_raises(self):
        """Test --set needs key=value."""
        with pytest.raises(ConfigurationError, match="--set"):
            _flag_overrides(_parse("train", "--seed", "0", "--set", "hyper.mu"))


class TestRun:
    """Tests for run function."""

    @patch("src.cli._build_pipeline")
    def test_success_prints_result(self, mock_build, capsys):
        """Test a successful command prints its JSON result and returns 0."""
        pipeline = Mock()
        pipeline.gen_data.return_value = CommandResult("gen-data", ["d/train.jsonl"], {"train_records": 6})
        mock_build.return_value = pipeline

        assert run(_parse("gen-data", "--seed", "2")) == 0
        config = pipeline.gen_data.call_args.args[0]
        assert config.seed == 2
        assert json.loads(capsys.readouterr().out) == {
            "command": "gen-data",
            "outputs": ["d/train.jsonl"],
            "train_records": 6,
        }

    @patch("src.cli._build_pipeline")
    def test_flags_reach_the_config(self, mock_build):
        """Test preset, ablation and --set values are layered into the config."""
        pipeline = Mock()
        pipeline.train.return_value = CommandResult("train")
        mock_build.return_value = pipeline

        run(_parse("train", "--seed", "5", "--preset", "paper", "--ablation", "no_backtracking", "--set", "hyper.k=4"))
        config = pipeline.train.call_args.args[0]
        assert config.preset.value == "paper"
        assert config.trainer.ablation == AblationKind.NO_BACKTRACKING
        assert config.hyper.k == 4
        assert pipeline.train.call_args.kwargs == {"resume_path": None}

    @patch("src.cli._build_pipeline")
    def test_training_failure_exit_code(self, mock_build, capsys):
        """Test a diverging run exits with 4."""
        pipeline = Mock()
        pipeline.train.side_effect = TrainingFailureError("J diverged", step=3)
        mock_build.return_value = pipeline

        assert run(_parse("train", "--seed", "0")) == EXIT_TRAINING
        assert "step 3: J diverged" in capsys.readouterr().err

    def test_invalid_override_exit_code(self):
        """Test an invalid configuration exits with 3."""
        assert run(_parse("train", "--seed", "0", "--set", "hyper.mu=2.0")) == EXIT_CONFIG

    def test_missing_input_exit_code(self, tmp_path):
        """Test a missing input file exits with 2."""
        args = _parse("pretrain", "--seed", "0", "--set", f"paths.data_dir={tmp_path}")
        assert run(args) == EXIT_MISSING_FILE

    @patch("src.cli._build_pipeline")
    def test_keyboard_interrupt(self, mock_build):
        """Test Ctrl-C exits with 130."""
        pipeline = Mock()
        pipeline.edit.side_effect = KeyboardInterrupt()
        mock_build.return_value = pipeline
        assert run(_parse("edit", "--seed", "0")) == EXIT_INTERRUPTED

    @patch("src.cli.run", return_value=0)
    def test_main_exits_with_run_code(self, mock_run):
        """Test main parses argv and exits with run's code."""
        with pytest.raises(SystemExit) as exc_info:
            main(["gen-data", "--seed", "1"])
        assert exc_info.value.code == 0
        assert mock_run.call_args.args[0].command == "gen-data"


class TestHandleError:
    """Tests for _handle_error function."""

    def test_handle_file_not_found_error(self, capsys):
        """Test handling FileNotFoundError."""
        error = FileNotFoundError(2, "No such file", "runs/model.rle")
        assert _handle_error(error) == EXIT_MISSING_FILE
        assert "✗ File not found: runs/model.rle" in capsys.readouterr().err

    def test_handle_configuration_error(self):
        """Test handling ConfigurationError."""
        assert _handle_error(ConfigurationError("hyper.mu", "must lie in (0, 1]")) == EXIT_CONFIG

    def test_handle_yaml_error(self):
        """Test handling a broken preset."""
        assert _handle_error(yaml.YAMLError("bad")) == EXIT_CONFIG

    def test_handle_training_failure(self):
        """Test handling TrainingFailureError."""
        assert _handle_error(TrainingFailureError("non-finite reward", step=2)) == EXIT_TRAINING

    @pytest.mark.parametrize(
        "error",
        [
            ValueError("Invalid value"),
            RecordParseError("train.jsonl", 3, "invalid JSON"),
            CheckpointFormatError("model.rle: truncated"),
            OSError("disk full"),
            RuntimeError("unexpected"),
        ],
    )
    def test_handle_other_errors(self, error):
        """Test everything else exits with 1."""
        assert _handle_error(error) == EXIT_ERROR

    def test_handle_keyboard_interrupt(self, capsys):
        """Test handling KeyboardInterrupt."""
        assert _handle_error(KeyboardInterrupt()) == EXIT_INTERRUPTED
        assert "cancelled" in capsys.readouterr().err
