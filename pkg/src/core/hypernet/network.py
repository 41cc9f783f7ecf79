"""Gradient-transforming hypernetwork that turns rank-one factors into weight edits."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.core.autodiff import ops
from src.core.autodiff.tensor import Tensor
from src.core.lm.factors import LayerFactors, RankOneFactors
from src.core.lm.model import ModelWeights, is_linear, linear, parameter_shapes
from src.domain.config import ModelConfig
from src.domain.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

ShapeKey = Tuple[int, int]
MLP_DEPTH = 4
NORM_EPS = 1e-8


@dataclass
class RunningNormalizer:
    """Per-feature running mean and variance over every token row seen in training mode."""

    dim: int
    count: float = 0.0
    mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    m2: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self.m2 is None:
            self.m2 = np.zeros(self.dim)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return self.m2 / (self.count - 1)

    def update(self, rows: np.ndarray) -> None:
        """Merge a batch of rows into the statistics (parallel Welford update)."""
        n = rows.shape[0]
        if n == 0:
            return
        batch_mean = rows.mean(axis=0)
        batch_m2 = ((rows - batch_mean) ** 2).sum(axis=0)
        total = self.count + n
        diff = batch_mean - self.mean
        self.mean = self.mean + diff * (n / total)
        self.m2 = self.m2 + batch_m2 + diff**2 * (self.count * n / total)
        self.count = total

    def normalize(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / np.sqrt(self.variance + NORM_EPS)


class ShapeGroup:
    """The MLP shared by every editable layer of one ``(fan_in, fan_out)`` shape.

    Input is ``concat(u, delta)`` of width ``d = fan_in + fan_out``; the MLP is
    ``d -> r -> r -> r -> d`` with GELU between layers and a zero-initialised
    last layer. A learned scalar ``scale`` (initially 0) multiplies the final
    update.
    """

    def __init__(self, fan_in: int, fan_out: int, rank: int, rng: np.random.Generator):
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.rank = rank
        width = fan_in + fan_out
        dims = [width, rank, rank, rank, width]
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        for i in range(MLP_DEPTH):
            d_in, d_out = dims[i], dims[i + 1]
            last = i == MLP_DEPTH - 1
            w = np.zeros((d_out, d_in)) if last else rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_out, d_in))
            self.weights.append(Tensor(w, requires_grad=True, name=f"{self.key_name}.w{i}"))
            self.biases.append(
                Tensor(np.zeros((1, d_out)), requires_grad=True, name=f"{self.key_name}.b{i}")
            )
        self.scale = Tensor(np.zeros((1, 1)), requires_grad=True, name=f"{self.key_name}.scale")
        self.normalizer = RunningNormalizer(width)

    @property
    def key(self) -> ShapeKey:
        return (self.fan_in, self.fan_out)

    @property
    def key_name(self) -> str:
        return f"g{self.fan_in}x{self.fan_out}"

    @property
    def width(self) -> int:
        return self.fan_in + self.fan_out

    def body_parameters(self) -> List[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def parameters(self) -> List[Tensor]:
        return self.body_parameters() + [self.scale]

    def parameter_count(self) -> int:
        return int(sum(p.values.size for p in self.parameters()))

    def mlp(self, x: Tensor) -> Tensor:
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = linear(h, w, b)
            if i < MLP_DEPTH - 1:
                h = ops.gelu(h)
        return h


@dataclass
class EditUpdate:
    """Dense per-layer weight deltas produced at one edit step."""

    step: int
    deltas: Dict[str, Tensor]

    def regularizer(self) -> Tensor:
        """Sum over layers of the squared Frobenius norm of each delta."""
        return ops.add_n([ops.frobenius_norm_sq(d) for d in self.deltas.values()])

    def norms_sq(self) -> Dict[str, float]:
        return {name: float(np.sum(d.values**2)) for name, d in self.deltas.items()}

    def is_finite(self) -> bool:
        return all(np.isfinite(d.values).all() for d in self.deltas.values())


def group_key(weights_shape: Tuple[int, int]) -> ShapeKey:
    """``(fan_in, fan_out)`` of a ``fan_out x fan_in`` weight matrix."""
    return (weights_shape[1], weights_shape[0])


class HyperNetwork:
    """One parameter group per distinct editable-layer shape."""

    def __init__(self, groups: Mapping[ShapeKey, ShapeGroup], layer_groups: Mapping[str, ShapeKey]):
        self.groups: Dict[ShapeKey, ShapeGroup] = dict(groups)
        self.layer_groups: Dict[str, ShapeKey] = dict(layer_groups)
        self.training = True

    @property
    def rank(self) -> int:
        return next(iter(self.groups.values())).rank

    def train(self, mode: bool = True) -> "HyperNetwork":
        """Toggle normalizer updates; statistics are frozen outside training mode."""
        self.training = mode
        return self

    def eval(self) -> "HyperNetwork":
        return self.train(False)

    def parameters(self) -> List[Tensor]:
        return [p for key in sorted(self.groups) for p in self.groups[key].parameters()]

    def body_parameters(self) -> List[Tensor]:
        return [p for key in sorted(self.groups) for p in self.groups[key].body_parameters()]

    def scale_parameters(self) -> List[Tensor]:
        return [self.groups[key].scale for key in sorted(self.groups)]

    def parameter_count(self) -> int:
        return sum(g.parameter_count() for g in self.groups.values())

    def group_for(self, layer: LayerFactors) -> ShapeGroup:
        """The group handling factors of ``layer``'s shape.

        Raises:
            ContractError: If no group has that shape.
        """
        key = (layer.fan_in, layer.fan_out)
        if key not in self.groups:
            raise ContractError(f"no hypernetwork group for shape {key} of layer '{layer.layer_id}'")
        return self.groups[key]

    def transform(self, factors: RankOneFactors, step: int = 0) -> EditUpdate:
        """Map rank-one factors to a dense update per layer.

        Factors enter as constants, so the update is differentiable in the
        hypernetwork parameters only. Rows whose ``delta`` is all zero carry no
        gradient signal and are skipped; a layer without signal gets a zero update.
        """
        deltas: Dict[str, Tensor] = {}
        for layer in factors:
            group = self.group_for(layer)
            active = np.any(layer.delta != 0.0, axis=1)
            if not active.any():
                deltas[layer.layer_id] = ops.constant(np.zeros((layer.fan_out, layer.fan_in)))
                continue
            raw = np.hstack([layer.u[active], layer.delta[active]])
            if self.training:
                group.normalizer.update(raw)
            residual = group.mlp(ops.constant(group.normalizer.normalize(raw)))
            pseudo = ops.add(ops.constant(raw), residual)
            u_tilde = ops.slice_cols(pseudo, 0, layer.fan_in)
            delta_tilde = ops.slice_cols(pseudo, layer.fan_in, group.width)
            outer = ops.matmul(ops.transpose(delta_tilde), u_tilde)
            deltas[layer.layer_id] = ops.scale_by(outer, group.scale)
        return EditUpdate(step=step, deltas=deltas)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Parameters and normalizer statistics as named arrays."""
        state: Dict[str, np.ndarray] = {}
        for key in sorted(self.groups):
            group = self.groups[key]
            for p in group.parameters():
                state[p.name] = p.values.copy()  # type: ignore[index]
            state[f"{group.key_name}.norm_mean"] = group.normalizer.mean.reshape(1, -1).copy()
            state[f"{group.key_name}.norm_m2"] = group.normalizer.m2.reshape(1, -1).copy()
            state[f"{group.key_name}.norm_count"] = np.array([[group.normalizer.count]])
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameters and statistics in place.

        Raises:
            ContractError: If a group's arrays are missing or misshapen.
        """
        for group in self.groups.values():
            for p in group.parameters():
                values = state.get(p.name)  # type: ignore[arg-type]
                if values is None:
                    raise ContractError(f"hypernetwork state lacks '{p.name}'")
                if values.shape != p.values.shape:
                    raise DimensionError(str(p.name), p.values.shape, values.shape)
                p.values[...] = values
            prefix = group.key_name
            try:
                group.normalizer.mean = state[f"{prefix}.norm_mean"].reshape(-1).copy()
                group.normalizer.m2 = state[f"{prefix}.norm_m2"].reshape(-1).copy()
                group.normalizer.count = float(state[f"{prefix}.norm_count"][0, 0])
            except KeyError as exc:
                raise ContractError(f"hypernetwork state lacks {exc}") from exc

    def header(self) -> List[int]:
        """Integer header: rank, group count, then each group's fan_in and fan_out."""
        keys = sorted(self.groups)
        return [self.rank, len(keys)] + [v for key in keys for v in key]


def analytic_parameter_count(fan_in: int, fan_out: int, rank: int) -> int:
    """Parameters of one shape group: ``2dr + 2r^2 + 3r + d + 1`` with ``d = fan_in + fan_out``."""
    d = fan_in + fan_out
    return 2 * d * rank + 2 * rank * rank + 3 * rank + d + 1


def editable_shapes(config: ModelConfig) -> Dict[str, Tuple[int, int]]:
    """Weight shape of every editable layer.

    Raises:
        ContractError: If a selector names a non-linear parameter.
    """
    shapes = {name: shape for name, shape, _ in parameter_shapes(config)}
    result = {}
    for name in config.editable_layers:
        if not is_linear(name, config):
            raise ContractError(f"layer '{name}' is not a linear layer")
        result[name] = shapes[name]
    return result


def init_hypernetwork(model_config: ModelConfig, rank: int, seed: int) -> HyperNetwork:
    """Build one zero-output MLP group per distinct editable-layer shape.

    Raises:
        ContractError: If ``rank`` is not positive or a selector is not a linear layer.
    """
    if rank <= 0:
        raise ContractError(f"rank must be positive, got {rank}")
    rng = np.random.default_rng(seed)
    groups: Dict[ShapeKey, ShapeGroup] = {}
    layer_groups: Dict[str, ShapeKey] = {}
    for name, shape in editable_shapes(model_config).items():
        key = group_key(shape)
        if key not in groups:
            groups[key] = ShapeGroup(key[0], key[1], rank, rng)
        layer_groups[name] = key
    logger.debug("Hypernetwork groups: %s", sorted(groups))
    return HyperNetwork(groups, layer_groups)


def hypernetwork_from_state(
    model_config: ModelConfig, header: List[int], state: Mapping[str, np.ndarray]
) -> HyperNetwork:
    """Rebuild a hypernetwork from a checkpoint header and its named arrays.

    Raises:
        ContractError: If the header does not match the model's editable layers.
    """
    if len(header) < 2 or len(header) != 2 + 2 * header[1]:
        raise ContractError(f"malformed hypernetwork header {header}")
    rank = header[0]
    stored = {(header[2 + 2 * i], header[3 + 2 * i]) for i in range(header[1])}
    network = init_hypernetwork(model_config, rank, seed=0)
    if set(network.groups) != stored:
        raise ContractError(
            f"checkpoint groups {sorted(stored)} do not match editable layers {sorted(network.groups)}"
        )
    network.load_state_dict(state)
    return network


def apply_update(
    weights: ModelWeights,
    update: EditUpdate,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ModelWeights:
    """``W_t = W_{t-1} + delta`` per updated layer, kept on the graph.

    Non-edited tensors are shared with ``weights``. With ``noise_std > 0`` a
    zero-mean Gaussian perturbation drawn from ``rng`` is added as a constant.

    Raises:
        ContractError: If a layer is unknown or noise is requested without a generator.
        DimensionError: If a delta's shape differs from its target weight.
    """
    if noise_std > 0 and rng is None:
        raise ContractError("noise_std > 0 needs a random generator")
    updated: Dict[str, Tensor] = {}
    for name, delta in update.deltas.items():
        if name not in weights.params:
            raise ContractError(f"update targets unknown layer '{name}'")
        target = weights[name]
        if delta.shape != target.shape:
            raise DimensionError(name, target.shape, delta.shape)
        new = ops.add(target, delta)
        if noise_std > 0:
            new = ops.add(new, ops.constant(rng.normal(0.0, noise_std, size=target.shape)))  # type: ignore[union-attr]
        new.name = name
        updated[name] = new
    return weights.replace(updated, version=weights.version + 1)


def transform(h: HyperNetwork, factors: RankOneFactors, step: int = 0) -> EditUpdate:
    """Functional form of ``HyperNetwork.transform``."""
    return h.transform(factors, step)
