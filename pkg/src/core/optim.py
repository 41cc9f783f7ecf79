"""Gradient-based optimizers over autodiff tensors."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from src.core.autodiff.tensor import Tensor
from src.domain.errors import ConfigurationError
from src.domain.kinds import OptimizerKind

logger = logging.getLogger(__name__)


@dataclass
class ParamGroup:
    """Parameters sharing one learning rate."""

    params: List[Tensor]
    lr: float


class Optimizer(ABC):
    """Updates parameter values in place from their accumulated gradients."""

    def __init__(self, groups: Sequence[ParamGroup]):
        for group in groups:
            if group.lr <= 0:
                raise ConfigurationError("optimizer.lr", f"must be > 0, got {group.lr}")
        self.groups = list(groups)

    @property
    def params(self) -> List[Tensor]:
        return [p for group in self.groups for p in group.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    @abstractmethod
    def step(self) -> None:
        """Apply one update using the current gradients."""


class SGD(Optimizer):
    """Plain stochastic gradient descent."""

    def step(self) -> None:
        for group in self.groups:
            for p in group.params:
                if p.grad is not None:
                    p.values -= group.lr * p.grad


class AdamW(Optimizer):
    """Adam with decoupled weight decay."""

    def __init__(
        self,
        groups: Sequence[ParamGroup],
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        super().__init__(groups)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: Dict[int, np.ndarray] = {}
        self._v: Dict[int, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for group in self.groups:
            for p in group.params:
                if p.grad is None:
                    continue
                key = id(p)
                m = self._m.get(key)
                if m is None:
                    m = self._m[key] = np.zeros_like(p.values)
                    self._v[key] = np.zeros_like(p.values)
                v = self._v[key]
                m *= self.beta1
                m += (1.0 - self.beta1) * p.grad
                v *= self.beta2
                v += (1.0 - self.beta2) * p.grad**2
                if self.weight_decay:
                    p.values -= group.lr * self.weight_decay * p.values
                p.values -= group.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def global_grad_norm(params: Sequence[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale gradients in place so their global norm is at most ``max_norm``.

    Returns:
        The norm before clipping.
    """
    norm = global_grad_norm(params)
    if norm > max_norm:
        logger.info("Gradient clipped: norm %.4f > %.2f", norm, max_norm)
        factor = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


class OptimizerFactory:
    """Factory for creating optimizers from a kind."""

    @staticmethod
    def create(
        kind: OptimizerKind,
        groups: Sequence[ParamGroup],
        weight_decay: float = 0.0,
    ) -> Optimizer:
        """Create an optimizer.

        Args:
            kind: Optimizer implementation.
            groups: Parameter groups with their learning rates.
            weight_decay: Decoupled weight decay (AdamW only).

        Returns:
            Optimizer instance.

        Raises:
            ConfigurationError: If the kind is not supported.
        """
        if kind == OptimizerKind.ADAMW:
            return AdamW(groups, weight_decay=weight_decay)
        if kind == OptimizerKind.SGD:
            return SGD(groups)
        raise ConfigurationError("optimizer.kind", f"unsupported optimizer: {kind}")


def single_group(params: Sequence[Tensor], lr: float) -> List[ParamGroup]:
    """Wrap a flat parameter list as one group."""
    return [ParamGroup(list(params), lr)]
