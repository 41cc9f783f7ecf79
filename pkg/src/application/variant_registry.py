"""Registry mapping training variants to their training routines."""

from typing import Callable, Dict, List, Optional

from src.application.corpus import StreamSampler
from src.application.trainer import (
    CheckpointCallback,
    TrainingResult,
    train,
    train_no_rl_baseline,
)
from src.core.hypernet.network import HyperNetwork
from src.core.lm.model import ModelWeights
from src.domain.config import TrainerConfig
from src.domain.errors import ConfigurationError
from src.domain.kinds import AblationKind

TrainingRoutine = Callable[
    [ModelWeights, HyperNetwork, StreamSampler, TrainerConfig, Optional[CheckpointCallback]],
    TrainingResult,
]


class VariantRegistry:
    """Registry for managing and retrieving training routines."""

    def __init__(self):
        """Initialize variant registry."""
        self._routines: Dict[AblationKind, TrainingRoutine] = {}

    def register(self, kind: AblationKind, routine: TrainingRoutine) -> None:
        """Register a training routine.

        Args:
            kind: Variant identifier.
            routine: Callable that trains a hypernetwork for that variant.
        """
        self._routines[kind] = routine

    def get(self, kind: AblationKind) -> TrainingRoutine:
        """Get the training routine of a variant.

        Args:
            kind: Variant identifier.

        Returns:
            The registered routine.

        Raises:
            ConfigurationError: If no routine is registered for ``kind``.
        """
        if kind not in self._routines:
            raise ConfigurationError("trainer.ablation", f"variant '{kind.value}' not registered")
        return self._routines[kind]

    def kinds(self) -> List[AblationKind]:
        """Registered variants in registration order."""
        return list(self._routines)


def create_variant_registry() -> VariantRegistry:
    """Create a registry with every built-in variant.

    The reward-level ablations share the trajectory trainer; their effect comes
    from ``TrainerConfig.effective_hyper``.
    """
    registry = VariantRegistry()
    registry.register(AblationKind.NONE, train)
    registry.register(AblationKind.NO_RL, train_no_rl_baseline)
    registry.register(AblationKind.NO_BACKTRACKING, train)
    registry.register(AblationKind.NO_REGULARIZATION, train)
    return registry
