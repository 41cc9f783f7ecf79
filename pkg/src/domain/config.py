"""Configuration dataclasses and their validation."""

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from src.domain.errors import ConfigurationError
from src.domain.kinds import AblationKind, PresetKind

LINEAR_LAYER_KINDS = ("attn_q", "attn_k", "attn_v", "attn_o", "ffn_up", "ffn_down")
BLOCK_PARAM_KINDS = LINEAR_LAYER_KINDS + (
    "ffn_up_b",
    "ffn_down_b",
    "ln1_g",
    "ln1_b",
    "ln2_g",
    "ln2_b",
)
GLOBAL_PARAM_NAMES = ("embed", "pos", "ln_f_g", "ln_f_b", "head")
GLOBAL_LINEAR_NAMES = ("head",)

_SELECTOR_RE = re.compile(r"^(?P<kind>[a-z_0-9]+?)@(?P<layer>\d+)$")


def parse_selector(selector: str, n_layers: int) -> Tuple[str, Optional[int]]:
    """Split a layer selector such as ``"ffn_up@1"`` into ``(kind, layer)``.

    Global parameters (``"head"``, ``"embed"``...) have no layer index.

    Raises:
        ConfigurationError: If the selector does not name exactly one weight.
    """
    if selector in GLOBAL_PARAM_NAMES:
        return selector, None
    match = _SELECTOR_RE.match(selector)
    if not match:
        raise ConfigurationError("model.editable_layers", f"malformed selector '{selector}'")
    kind, layer = match.group("kind"), int(match.group("layer"))
    if kind not in BLOCK_PARAM_KINDS:
        raise ConfigurationError("model.editable_layers", f"unknown layer kind '{kind}'")
    if layer >= n_layers:
        raise ConfigurationError(
            "model.editable_layers", f"selector '{selector}' exceeds n_layers={n_layers}"
        )
    return kind, layer


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the toy language model and the layers the editor may touch."""

    vocab_size: int = 64
    d_model: int = 32
    n_layers: int = 2
    d_ff: int = 64
    n_heads: int = 2
    max_seq_len: int = 24
    editable_layers: Tuple[str, ...] = ("ffn_up@1", "ffn_down@1")

    def validate(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "d_ff", "n_heads", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"model.{name}", "must be a positive integer")
        if self.d_model % self.n_heads:
            raise ConfigurationError("model.n_heads", "d_model must be divisible by n_heads")
        if not self.editable_layers:
            raise ConfigurationError("model.editable_layers", "must not be empty")
        if len(set(self.editable_layers)) != len(self.editable_layers):
            raise ConfigurationError("model.editable_layers", "selectors must be unique")
        for selector in self.editable_layers:
            parse_selector(selector, self.n_layers)


@dataclass(frozen=True)
class HyperParams:
    """Every scalar of the reward, the trajectory and the hypernetwork."""

    k: int = 10
    mu: float = 0.95
    gamma: float = 1.0
    lambda_loc: float = 0.6
    eta: float = 1e-4
    lr_inner: float = 1.0
    lr_meta: float = 1e-3
    lr_scale: float = 0.05
    trajectory_len: int = 20
    batch_size: int = 4
    noise_std: float = 0.0
    rank: int = 32
    grad_clip: float = 1.0
    backtrack_post_edit: bool = False

    def validate(self) -> None:
        if self.k < 0:
            raise ConfigurationError("hyper.k", "must be >= 0")
        if not 0 < self.mu <= 1:
            raise ConfigurationError("hyper.mu", "must lie in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ConfigurationError("hyper.gamma", "must lie in [0, 1]")
        if self.lambda_loc < 0:
            raise ConfigurationError("hyper.lambda_loc", "must be >= 0")
        if self.eta < 0:
            raise ConfigurationError("hyper.eta", "must be >= 0")
        if self.noise_std < 0:
            raise ConfigurationError("hyper.noise_std", "must be >= 0")
        for name in ("lr_meta", "lr_scale", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"hyper.{name}", "must be > 0")
        for name in ("trajectory_len", "batch_size", "rank"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"hyper.{name}", "must be a positive integer")


@dataclass(frozen=True)
class TrainerConfig:
    """Outer loop settings for hypernetwork training."""

    hyper: HyperParams = field(default_factory=HyperParams)
    epochs: int = 60
    seed: int = 0
    ablation: AblationKind = AblationKind.NONE
    patience: int = 5
    min_delta: float = 1e-3
    checkpoint_every: int = 0
    weight_decay: float = 0.0

    def validate(self) -> None:
        self.hyper.validate()
        if self.epochs < 1:
            raise ConfigurationError("trainer.epochs", "must be >= 1")
        if self.patience < 1:
            raise ConfigurationError("trainer.patience", "must be >= 1")
        if self.min_delta < 0:
            raise ConfigurationError("trainer.min_delta", "must be >= 0")
        if self.checkpoint_every < 0:
            raise ConfigurationError("trainer.checkpoint_every", "must be >= 0")
        if self.weight_decay < 0:
            raise ConfigurationError("trainer.weight_decay", "must be >= 0")

    def effective_hyper(self) -> HyperParams:
        """Hyperparameters as the reward sees them under the configured ablation."""
        if self.ablation == AblationKind.NO_BACKTRACKING:
            return dataclasses.replace(self.hyper, k=0)
        if self.ablation == AblationKind.NO_REGULARIZATION:
            return dataclasses.replace(self.hyper, eta=0.0)
        return self.hyper


@dataclass(frozen=True)
class DataConfig:
    """Synthetic corpus sizes."""

    n_subjects: int = 100
    n_relations: int = 4
    subject_pool: int = 12
    n_train_edits: int = 80
    n_eval_edits: int = 80
    n_eval_locality: int = 40

    def validate(self) -> None:
        for name in ("n_subjects", "n_relations", "n_train_edits", "n_eval_edits", "n_eval_locality"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"data.{name}", "must be a positive integer")
        if self.n_subjects < 2:
            raise ConfigurationError("data.n_subjects", "must be >= 2 so locality prompts can use another subject")
        if self.subject_pool < 2:
            raise ConfigurationError("data.subject_pool", "must be >= 2")
        max_subjects = self.subject_pool * (self.subject_pool - 1)
        if self.n_subjects > max_subjects:
            raise ConfigurationError(
                "data.n_subjects", f"subject_pool={self.subject_pool} yields at most {max_subjects}"
            )
        needed = self.n_train_edits + self.n_eval_edits + self.n_eval_locality
        if needed >= self.n_subjects * self.n_relations:
            raise ConfigurationError(
                "data.n_subjects",
                f"{self.n_subjects}x{self.n_relations} facts cannot cover {needed} reserved "
                "facts plus a pretraining set",
            )


@dataclass(frozen=True)
class PretrainConfig:
    """Pretraining loop settings for the base model."""

    steps: int = 3000
    lr: float = 3e-3
    batch_size: int = 32
    answer_only: bool = True

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigurationError("pretrain.steps", "must be >= 0")
        if self.lr <= 0:
            raise ConfigurationError("pretrain.lr", "must be > 0")
        if self.batch_size <= 0:
            raise ConfigurationError("pretrain.batch_size", "must be a positive integer")


@dataclass(frozen=True)
class EditConfig:
    """Settings for the editing stage and its baselines."""

    fine_tune_steps: int = 10
    fine_tune_lr: float = 0.1
    track_retention: bool = False

    def validate(self) -> None:
        if self.fine_tune_steps < 0:
            raise ConfigurationError("edit.fine_tune_steps", "must be >= 0")
        if self.fine_tune_lr <= 0:
            raise ConfigurationError("edit.fine_tune_lr", "must be > 0")


@dataclass(frozen=True)
class PathsConfig:
    """Input and output locations."""

    data_dir: str = "runs/data"
    model_path: str = "runs/pretrain/model.rle"
    hypernet_path: str = "runs/train/hypernet.rlh"
    edited_path: str = "runs/edit/edited.rle"
    out_dir: str = "runs/out"

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name):
                raise ConfigurationError(f"paths.{f.name}", "must not be empty")


@dataclass(frozen=True)
class RunConfig:
    """Complete configuration of one command invocation."""

    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    edit: EditConfig = field(default_factory=EditConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    preset: PresetKind = PresetKind.DESK

    @property
    def hyper(self) -> HyperParams:
        return self.trainer.hyper

    @property
    def seed(self) -> int:
        return self.trainer.seed

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.trainer.validate()
        self.data.validate()
        self.pretrain.validate()
        self.edit.validate()
        self.paths.validate()
        return self

    def to_flat(self) -> Dict[str, Any]:
        """Flatten into dotted keys, the layout of the run config file."""
        flat: Dict[str, Any] = {"preset": self.preset.value}
        for section, obj in _sections(self).items():
            for f in dataclasses.fields(obj):
                if section == "trainer" and f.name == "hyper":
                    continue
                value = getattr(obj, f.name)
                if isinstance(value, AblationKind):
                    value = value.value
                elif isinstance(value, tuple):
                    value = list(value)
                flat[f"{section}.{f.name}"] = value
        return flat

    @classmethod
    def from_flat(cls, values: Mapping[str, Any]) -> "RunConfig":
        """Build a config from dotted keys, starting from the defaults.

        Raises:
            ConfigurationError: For unknown keys or values of the wrong type.
        """
        return cls().with_overrides(values)

    def with_overrides(self, values: Mapping[str, Any]) -> "RunConfig":
        """Return a copy with dotted-key overrides applied (unvalidated)."""
        grouped: Dict[str, Dict[str, Any]] = {}
        preset = self.preset
        for key, value in values.items():
            if key == "preset":
                preset = _coerce_enum(PresetKind, value, "preset")
                continue
            section, _, name = key.partition(".")
            if not name:
                raise ConfigurationError(key, "expected a dotted key such as 'hyper.mu'")
            grouped.setdefault(section, {})[name] = value

        current = _sections(self)
        updated: Dict[str, Any] = {}
        for section, overrides in grouped.items():
            if section not in current:
                raise ConfigurationError(section, "unknown configuration section")
            updated[section] = _replace_fields(current[section], section, overrides)

        trainer = updated.get("trainer", self.trainer)
        if "hyper" in updated:
            trainer = dataclasses.replace(trainer, hyper=updated["hyper"])
        return dataclasses.replace(
            self,
            model=updated.get("model", self.model),
            trainer=trainer,
            data=updated.get("data", self.data),
            pretrain=updated.get("pretrain", self.pretrain),
            edit=updated.get("edit", self.edit),
            paths=updated.get("paths", self.paths),
            preset=preset,
        )


def _sections(config: RunConfig) -> Dict[str, Any]:
    return {
        "model": config.model,
        "hyper": config.trainer.hyper,
        "trainer": config.trainer,
        "data": config.data,
        "pretrain": config.pretrain,
        "edit": config.edit,
        "paths": config.paths,
    }


def _replace_fields(obj: Any, section: str, overrides: Dict[str, Any]) -> Any:
    known = {f.name: f for f in dataclasses.fields(obj)}
    changes: Dict[str, Any] = {}
    for name, value in overrides.items():
        dotted = f"{section}.{name}"
        if name not in known or (section == "trainer" and name == "hyper"):
            raise ConfigurationError(dotted, "unknown configuration key")
        default = getattr(obj, name)
        changes[name] = _coerce(default, value, dotted)
    return dataclasses.replace(obj, **changes)


def _coerce(default: Any, value: Any, field_name: str) -> Any:
    if isinstance(default, AblationKind):
        return _coerce_enum(AblationKind, value, field_name)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigurationError(field_name, f"expected true/false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(field_name, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads "1e-4" as a string
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(field_name, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(field_name, f"expected a list, got {value!r}")
        return tuple(str(v) for v in value)
    if isinstance(default, str):
        return str(value)
    raise ConfigurationError(field_name, "unsupported configuration type")  # pragma: no cover


def _coerce_enum(enum_cls: Any, value: Any, field_name: str) -> Any:
    try:
        return enum_cls(value)
    except ValueError as exc:
        allowed = ", ".join(member.value for member in enum_cls)
        raise ConfigurationError(field_name, f"expected one of {{{allowed}}}, got {value!r}") from exc
