"""Dense 2-D tensors recorded on a dynamic tape for reverse-mode differentiation."""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import ContractError, DimensionError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_node_ids = itertools.count()
_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations currently record onto the tape."""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run a block without recording operations (thread-local)."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


@dataclass(eq=False)
class Node:
    """Record of the operation that produced a tensor.

    ``index`` grows monotonically, so sorting nodes by index yields a
    topological order: inputs always exist before the node that consumes them.
    """

    op: str
    inputs: Tuple["Tensor", ...]
    backward_fn: BackwardFn
    index: int


class Tensor:
    """A 2-D float64 array with an optional gradient and producing node."""

    __slots__ = ("values", "grad", "requires_grad", "graph_node", "name", "_retain")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionError("tensor", tuple(arr.shape))
        self.values: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.graph_node: Optional[Node] = None
        self.name = name
        self._retain = False

    @classmethod
    def from_op(cls, values: np.ndarray, op: str, inputs: Sequence["Tensor"], backward_fn: BackwardFn) -> "Tensor":
        """Create an operation output, recording a node when any input needs gradients."""
        out = cls(values)
        if is_grad_enabled() and any(t.requires_grad for t in inputs):
            out.requires_grad = True
            out.graph_node = Node(op, tuple(inputs), backward_fn, next(_node_ids))
        return out

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def is_leaf(self) -> bool:
        return self.graph_node is None

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.rows}x{self.cols}")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values

    def detach(self) -> "Tensor":
        """Return a leaf copy that no gradient flows through."""
        return Tensor(self.values.copy(), name=self.name)

    def retain_grad(self) -> "Tensor":
        """Keep the gradient of this non-leaf tensor after ``backward``."""
        self._retain = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.rows}x{self.cols}{label}, requires_grad={self.requires_grad})"

    # Operator sugar delegates to the primitive set.
    def __add__(self, other: "Tensor") -> "Tensor":
        from src.core.autodiff import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from src.core.autodiff import ops

        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from src.core.autodiff import ops

        return ops.elementwise_mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from src.core.autodiff import ops

        return ops.matmul(self, other)

    def __neg__(self) -> "Tensor":
        from src.core.autodiff import ops

        return ops.scale(self, -1.0)


class Graph:
    """The nodes reachable from one output, in topological order."""

    def __init__(self, nodes: List[Tuple[Node, Tensor]]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        """Collect every node the output depends on (iterative, no recursion limit)."""
        seen: Dict[int, Tuple[Node, Tensor]] = {}
        stack = [output]
        visited = set()
        while stack:
            tensor = stack.pop()
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            node = tensor.graph_node
            if node is None:
                continue
            seen[node.index] = (node, tensor)
            stack.extend(t for t in node.inputs if t.requires_grad)
        ordered = [seen[i] for i in sorted(seen)]
        return cls(ordered)

    def leaves(self) -> List[Tensor]:
        """Leaf tensors requiring gradients, in first-use order."""
        found: Dict[int, Tensor] = {}
        for node, _ in self.nodes:
            for t in node.inputs:
                if t.requires_grad and t.graph_node is None and id(t) not in found:
                    found[id(t)] = t
        return list(found.values())

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every leaf that ``loss`` depends on.

    Gradients accumulate across calls until ``zero_grad``.

    Raises:
        ContractError: If ``loss`` is not a 1x1 tensor.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar loss, got {loss.rows}x{loss.cols}")
    if not loss.requires_grad:
        return
    if loss.graph_node is None:
        loss.grad = np.ones((1, 1)) if loss.grad is None else loss.grad + 1.0
        return

    graph = Graph.trace(loss)
    for leaf in graph.leaves():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.values)

    pending: Dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node, out in reversed(graph.nodes):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        if out._retain:
            out.grad = g.copy() if out.grad is None else out.grad + g
        input_grads = node.backward_fn(g)
        for inp, ig in zip(node.inputs, input_grads):
            if ig is None or not inp.requires_grad:
                continue
            if inp.graph_node is None:
                inp.grad += ig
            elif id(inp) in pending:
                pending[id(inp)] = pending[id(inp)] + ig
            else:
                pending[id(inp)] = ig
