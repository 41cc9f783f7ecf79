"""Reverse-mode automatic differentiation over dense 2-D float64 arrays."""

from src.core.autodiff.tensor import Graph, Node, Tensor, backward, is_grad_enabled, no_grad

__all__ = ["Graph", "Node", "Tensor", "backward", "is_grad_enabled", "no_grad"]
