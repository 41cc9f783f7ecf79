"""Editor hypernetwork: rank-one gradient factors in, weight updates out."""

from src.core.hypernet.network import (
    EditUpdate,
    HyperNetwork,
    RunningNormalizer,
    ShapeGroup,
    analytic_parameter_count,
    apply_update,
    hypernetwork_from_state,
    init_hypernetwork,
    transform,
)

__all__ = [
    "EditUpdate",
    "HyperNetwork",
    "RunningNormalizer",
    "ShapeGroup",
    "analytic_parameter_count",
    "apply_update",
    "hypernetwork_from_state",
    "init_hypernetwork",
    "transform",
]
