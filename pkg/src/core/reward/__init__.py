"""Edit reward components and the trajectory return."""

from src.core.reward.reward import (
    BREAKDOWN_COLUMNS,
    BaseLossParts,
    LocalityReference,
    RewardBreakdown,
    backtracking_coefficients,
    backtracking_loss,
    base_loss,
    format_decimal,
    step_reward,
    trajectory_return,
)

__all__ = [
    "BREAKDOWN_COLUMNS",
    "BaseLossParts",
    "LocalityReference",
    "RewardBreakdown",
    "backtracking_coefficients",
    "backtracking_loss",
    "base_loss",
    "format_decimal",
    "step_reward",
    "trajectory_return",
]
