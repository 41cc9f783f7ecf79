"""Concrete implementations of preset and run-config loading."""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from ..domain.config import RunConfig
from ..domain.errors import ConfigurationError
from ..domain.interfaces import ConfigLoader
from ..domain.kinds import PresetKind


def _flatten(values: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in values.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


class YamlConfigLoader(ConfigLoader):
    """Loads named presets from YAML files."""

    def __init__(self, config_dir: str = "config/presets") -> None:
        """Initialize YAML config loader.

        Args:
            config_dir: Directory path containing the preset YAML files.
        """
        self._config_dir = Path(config_dir)

    def load_preset(self, name: str) -> Dict[str, Any]:
        """Load a preset as flat dotted keys.

        Args:
            name: Preset identifier.

        Returns:
            Dictionary such as ``{"hyper.mu": 0.95, ...}`` including ``"preset"``.

        Raises:
            FileNotFoundError: If the preset file does not exist.
        """
        config_file = self._config_dir / f"{name}.yml"
        if not config_file.exists():
            config_file = self._config_dir / f"{name}.yaml"

        if not config_file.exists():
            raise FileNotFoundError(f"Preset file not found: {self._config_dir / name}.yml")

        with open(config_file, encoding="utf-8") as f:
            content = yaml.safe_load(f) or {}
        if not isinstance(content, Mapping):
            raise ConfigurationError("preset", f"{config_file} must contain a mapping")
        flat = _flatten(content)
        flat["preset"] = name
        return flat


class KeyValueConfigParser:
    """Parses flat ``key = value`` run-config files.

    Lines are ``dotted.key = value``; ``#`` starts a comment. Values are read
    as YAML scalars, so ``1e-4``, ``true`` and ``[ffn_up@1, ffn_down@1]`` work.
    """

    def parse_text(self, text: str, source: str = "<config>") -> Dict[str, Any]:
        """Parse config text.

        Raises:
            ConfigurationError: For lines without ``=`` or with an empty key.
        """
        values: Dict[str, Any] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ConfigurationError(key or source, f"{source}:{number}: expected 'key = value'")
            try:
                values[key] = yaml.safe_load(value.strip()) if value.strip() else ""
            except yaml.YAMLError as exc:
                raise ConfigurationError(key, f"{source}:{number}: unreadable value") from exc
        return values

    def parse_file(self, path: str) -> Dict[str, Any]:
        """Parse a config file.

        Raises:
            FileNotFoundError: If the file does not exist.
        """
        with open(path, encoding="utf-8") as f:
            return self.parse_text(f.read(), source=path)


def load_run_config(
    loader: ConfigLoader,
    preset: Optional[str] = None,
    config_path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Build a validated run config: preset, then config file, then explicit overrides.

    The preset named in the config file applies when ``preset`` is not given;
    without either, ``desk`` is used.

    Raises:
        ConfigurationError: If any layer holds an unknown key or an invalid value.
        FileNotFoundError: If the preset or config file is missing.
    """
    file_values = KeyValueConfigParser().parse_file(config_path) if config_path else {}
    name = preset or file_values.get("preset") or PresetKind.DESK.value
    try:
        name = PresetKind(name).value
    except ValueError as exc:
        raise ConfigurationError("preset", f"unknown preset '{name}'") from exc

    config = RunConfig.from_flat(loader.load_preset(name))
    config = config.with_overrides({k: v for k, v in file_values.items() if k != "preset"})
    config = config.with_overrides(dict(overrides or {}))
    return config.validate()
