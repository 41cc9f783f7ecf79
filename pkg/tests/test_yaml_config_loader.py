"""Tests for YAML config loader."""

import tempfile
from pathlib import Path
from unittest.mock import Mock

import pytest
import yaml

from src.cli import PRESETS_DIR
from src.domain.errors import ConfigurationError
from src.domain.kinds import PresetKind
from src.infrastructure.config_loader import (
    KeyValueConfigParser,
    YamlConfigLoader,
    load_run_config,
)


class TestYamlConfigLoader:
    """Tests for YamlConfigLoader class."""

    @pytest.fixture
    def temp_config_dir(self):
        """Create a temporary config directory."""
        with tempfile.TemporaryDirectory() as tmpdir:
            yield Path(tmpdir)

    @pytest.fixture
    def config_loader(self, temp_config_dir):
        """Create a YamlConfigLoader instance."""
        return YamlConfigLoader(str(temp_config_dir))

    def test_load_preset_yml(self, config_loader, temp_config_dir):
        """Test loading a preset from .yml flattens sections into dotted keys."""
        with open(temp_config_dir / "desk.yml", "w", encoding="utf-8") as f:
            yaml.dump({"hyper": {"mu": 0.9, "k": 4}, "model": {"vocab_size": 32}}, f)

        result = config_loader.load_preset("desk")
        assert result == {"hyper.mu": 0.9, "hyper.k": 4, "model.vocab_size": 32, "preset": "desk"}

    def test_load_preset_yaml(self, config_loader, temp_config_dir):
        """Test loading a preset from .yaml file."""
        with open(temp_config_dir / "paper.yaml", "w", encoding="utf-8") as f:
            yaml.dump({"trainer": {"epochs": 3}}, f)

        assert config_loader.load_preset("paper")["trainer.epochs"] == 3

    def test_load_preset_not_found(self, config_loader):
        """Test loading a missing preset raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError, match="Preset file not found"):
            config_loader.load_preset("nonexistent")

    def test_load_preset_empty_file(self, config_loader, temp_config_dir):
        """Test an empty preset only names itself."""
        (temp_config_dir / "desk.yml").write_text("", encoding="utf-8")
        assert config_loader.load_preset("desk") == {"preset": "desk"}

    def test_load_preset_not_a_mapping(self, config_loader, temp_config_dir):
        """Test a list document is rejected."""
        (temp_config_dir / "desk.yml").write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="preset"):
            config_loader.load_preset("desk")

    def test_load_preset_invalid_yaml(self, config_loader, temp_config_dir):
        """Test malformed YAML propagates the parser error."""
        (temp_config_dir / "desk.yml").write_text("hyper: [unclosed\n", encoding="utf-8")
        with pytest.raises(yaml.YAMLError):
            config_loader.load_preset("desk")

    @pytest.mark.parametrize("name", ["desk", "paper"])
    def test_shipped_presets_validate(self, name):
        """Test the bundled presets build valid run configs."""
        config = load_run_config(YamlConfigLoader(str(PRESETS_DIR)), preset=name)
        assert config.preset == PresetKind(name)

    def test_paper_preset_pins_hyperparameters(self):
        """Test the paper preset carries the full-scale reward and learning rates."""
        config = load_run_config(YamlConfigLoader(str(PRESETS_DIR)), preset="paper")
        assert config.preset == PresetKind.PAPER
        assert config.hyper.mu == pytest.approx(0.95)
        assert config.hyper.k == 10
        assert config.hyper.eta == pytest.approx(1e-4)
        assert config.hyper.gamma == pytest.approx(1.0)
        assert config.hyper.lr_inner == pytest.approx(1e-6)
        assert config.hyper.lr_meta == pytest.approx(1e-5)


class TestKeyValueConfigParser:
    """Tests for KeyValueConfigParser."""

    def test_parse_text(self):
        """Test values are read as YAML scalars and comments are dropped."""
        text = "# run\nhyper.eta = 1e-4\nhyper.k = 3  # window\n\nmodel.editable_layers = [ffn_up@1]\nedit.track_retention = true\n"
        assert KeyValueConfigParser().parse_text(text) == {
            "hyper.eta": "1e-4",
            "hyper.k": 3,
            "model.editable_layers": ["ffn_up@1"],
            "edit.track_retention": True,
        }

    def test_missing_equals_raises(self):
        """Test a line without '=' names its position."""
        with pytest.raises(ConfigurationError, match="run.cfg:2"):
            KeyValueConfigParser().parse_text("hyper.k = 1\nhyper.mu\n", source="run.cfg")

    def test_unreadable_value_raises(self):
        """Test a value YAML cannot read is a configuration error for its key."""
        with pytest.raises(ConfigurationError, match="hyper.k"):
            KeyValueConfigParser().parse_text("hyper.k = [1\n")

    def test_parse_file_not_found(self, tmp_path):
        """Test a missing file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            KeyValueConfigParser().parse_file(str(tmp_path / "missing.cfg"))


class TestLoadRunConfig:
    """Tests for load_run_config layering."""

    @pytest.fixture
    def loader(self):
        """Loader returning a fixed preset."""
        loader = Mock()
        loader.load_preset.side_effect = lambda name: {"preset": name, "hyper.k": 4, "hyper.mu": 0.9}
        return loader

    def test_defaults_to_desk(self, loader):
        """Test the desk preset is used when none is named."""
        config = load_run_config(loader)
        loader.load_preset.assert_called_once_with("desk")
        assert config.hyper.k == 4

    def test_layers_apply_in_order(self, loader, tmp_path):
        """Test config file values override the preset and overrides win last."""
        path = tmp_path / "run.cfg"
        path.write_text("preset = paper\nhyper.k = 6\nhyper.mu = 0.5\n", encoding="utf-8")
        config = load_run_config(loader, config_path=str(path), overrides={"hyper.mu": 0.7})
        loader.load_preset.assert_called_once_with("paper")
        assert config.hyper.k == 6
        assert config.hyper.mu == 0.7

    def test_explicit_preset_beats_file(self, loader, tmp_path):
        """Test the preset argument takes precedence over the file's preset."""
        path = tmp_path / "run.cfg"
        path.write_text("preset = paper\n", encoding="utf-8")
        load_run_config(loader, preset="desk", config_path=str(path))
        loader.load_preset.assert_called_once_with("desk")

    def test_unknown_preset_raises(self, loader):
        """Test only known presets are accepted."""
        with pytest.raises(ConfigurationError, match="unknown preset"):
            load_run_config(loader, preset="huge")

    def test_invalid_result_raises(self, loader):
        """Test the layered result is validated."""
        with pytest.raises(ConfigurationError, match="hyper.mu"):
            load_run_config(loader, overrides={"hyper.mu": 2.0})
