"""Enumerations for configurable variants."""

from enum import Enum


class AblationKind(str, Enum):
    """Hypernetwork training variants compared in the ablation table."""

    NONE = "none"
    NO_RL = "no_rl"
    NO_BACKTRACKING = "no_backtracking"
    NO_REGULARIZATION = "no_regularization"


class PresetKind(str, Enum):
    """Named hyperparameter presets."""

    DESK = "desk"
    PAPER = "paper"


class OptimizerKind(str, Enum):
    """Optimizer implementations available for the meta and pretraining loops."""

    ADAMW = "adamw"
    SGD = "sgd"
