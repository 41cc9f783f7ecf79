"""Tiny pre-norm transformer over a synthetic vocabulary."""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.autodiff import ops
from src.core.autodiff.tensor import Tensor
from src.domain.config import GLOBAL_LINEAR_NAMES, LINEAR_LAYER_KINDS, ModelConfig, parse_selector
from src.domain.errors import ContractError, DimensionError

ATTENTION_MASK_VALUE = -1e9


def parameter_shapes(config: ModelConfig) -> List[Tuple[str, Tuple[int, int], int]]:
    """Ordered ``(name, shape, fan_in)`` for every parameter.

    Linear weights are stored ``fan_out x fan_in`` and applied as ``x @ W.T``.
    A ``fan_in`` of 0 marks parameters initialised to constants.
    """
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    shapes: List[Tuple[str, Tuple[int, int], int]] = [
        ("embed", (v, d), d),
        ("pos", (config.max_seq_len, d), d),
    ]
    for i in range(config.n_layers):
        shapes += [
            (f"ln1_g@{i}", (1, d), 0),
            (f"ln1_b@{i}", (1, d), 0),
            (f"attn_q@{i}", (d, d), d),
            (f"attn_k@{i}", (d, d), d),
            (f"attn_v@{i}", (d, d), d),
            (f"attn_o@{i}", (d, d), d),
            (f"ln2_g@{i}", (1, d), 0),
            (f"ln2_b@{i}", (1, d), 0),
            (f"ffn_up@{i}", (f, d), d),
            (f"ffn_up_b@{i}", (1, f), 0),
            (f"ffn_down@{i}", (d, f), f),
            (f"ffn_down_b@{i}", (1, d), 0),
        ]
    shapes += [
        ("ln_f_g", (1, d), 0),
        ("ln_f_b", (1, d), 0),
        ("head", (v, d), d),
    ]
    return shapes


def is_linear(name: str, config: ModelConfig) -> bool:
    """Whether ``name`` selects a weight matrix applied as a linear map."""
    kind, _ = parse_selector(name, config.n_layers)
    return kind in LINEAR_LAYER_KINDS or kind in GLOBAL_LINEAR_NAMES


class ModelWeights:
    """Named parameter tensors of one model state.

    ``version`` counts the edits applied since the pretrained snapshot; it lets
    rollout instrumentation tell W_{t-1} from older states.
    """

    def __init__(self, config: ModelConfig, params: Mapping[str, Tensor], version: int = 0):
        expected = [name for name, _, _ in parameter_shapes(config)]
        missing = [name for name in expected if name not in params]
        if missing:
            raise ContractError(f"missing parameters: {missing}")
        for name, shape, _ in parameter_shapes(config):
            if params[name].shape != shape:
                raise DimensionError(name, shape, params[name].shape)
        self.config = config
        self.params: Dict[str, Tensor] = {name: params[name] for name in expected}
        self.version = version

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def items(self):
        return self.params.items()

    def tensors(self) -> List[Tensor]:
        return list(self.params.values())

    def as_numpy(self) -> Dict[str, np.ndarray]:
        return {name: t.values for name, t in self.params.items()}

    def snapshot(self) -> "ModelWeights":
        """Detached copy that shares no storage with this state."""
        return ModelWeights(
            self.config,
            {name: Tensor(t.values.copy(), name=name) for name, t in self.params.items()},
            self.version,
        )

    def trainable_copy(self, names: Optional[Sequence[str]] = None) -> "ModelWeights":
        """Detached copy whose ``names`` (default: all) require gradients."""
        selected = set(self.params if names is None else names)
        return ModelWeights(
            self.config,
            {
                name: Tensor(t.values.copy(), requires_grad=name in selected, name=name)
                for name, t in self.params.items()
            },
            self.version,
        )

    def replace(self, updates: Mapping[str, Tensor], version: Optional[int] = None) -> "ModelWeights":
        """New state with ``updates`` substituted; other tensors are shared."""
        params = dict(self.params)
        params.update(updates)
        return ModelWeights(self.config, params, self.version if version is None else version)

    def bitwise_equal(self, other: "ModelWeights") -> bool:
        return self.params.keys() == other.params.keys() and all(
            np.array_equal(t.values, other.params[name].values) for name, t in self.params.items()
        )

    def max_abs_diff(self, other: "ModelWeights") -> float:
        return max(
            float(np.max(np.abs(t.values - other.params[name].values)))
            for name, t in self.params.items()
        )


def init_weights(config: ModelConfig, rng: np.random.Generator) -> ModelWeights:
    """Gaussian init with std ``1/sqrt(fan_in)``; norms start at identity, biases at zero."""
    config.validate()
    params: Dict[str, Tensor] = {}
    for name, shape, fan_in in parameter_shapes(config):
        if fan_in:
            values = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)
        elif "_g" in name:
            values = np.ones(shape)
        else:
            values = np.zeros(shape)
        params[name] = Tensor(values, name=name)
    return ModelWeights(config, params)


@dataclass(frozen=True)
class PackedBatch:
    """Several token sequences stacked row-wise for one forward pass.

    Attention is causal within each sequence and blocked across sequences.
    Row ``r`` at in-sequence position ``p`` predicts position ``p + 1``.
    """

    token_lists: Tuple[Tuple[int, ...], ...]
    token_ids: np.ndarray
    positions: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray
    attention_mask: np.ndarray = field(repr=False)

    @classmethod
    def pack(cls, token_lists: Sequence[Sequence[int]], config: ModelConfig) -> "PackedBatch":
        """Stack sequences, validating vocabulary range and context length.

        Raises:
            ContractError: If a sequence is empty, too long or holds out-of-range tokens.
        """
        if not token_lists:
            raise ContractError("cannot pack an empty batch")
        lists = tuple(tuple(int(t) for t in tokens) for tokens in token_lists)
        for tokens in lists:
            if not tokens:
                raise ContractError("cannot score an empty sequence")
            if len(tokens) > config.max_seq_len:
                raise ContractError(f"sequence length {len(tokens)} exceeds {config.max_seq_len}")
            if min(tokens) < 0 or max(tokens) >= config.vocab_size:
                raise ContractError(f"tokens {tokens} outside vocabulary of size {config.vocab_size}")
        lengths = np.array([len(t) for t in lists], dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        token_ids = np.concatenate([np.array(t, dtype=np.int64) for t in lists])
        positions = np.concatenate([np.arange(n, dtype=np.int64) for n in lengths])
        targets = np.concatenate(
            [np.array(t[1:] + (0,), dtype=np.int64) for t in lists]
        )
        segment = np.repeat(np.arange(len(lists)), lengths)
        allowed = (segment[:, None] == segment[None, :]) & (positions[None, :] <= positions[:, None])
        mask = np.where(allowed, 0.0, ATTENTION_MASK_VALUE)
        return cls(lists, token_ids, positions, starts, lengths, targets, mask)

    @property
    def n_rows(self) -> int:
        return int(self.token_ids.size)

    def __len__(self) -> int:
        return len(self.token_lists)

    def row_mask(self, index: int, first: int, last: int) -> np.ndarray:
        """Boolean row mask selecting in-sequence positions ``first..last`` of sequence ``index``."""
        mask = np.zeros(self.n_rows, dtype=bool)
        start = int(self.starts[index])
        if last >= first:
            mask[start + first : start + last + 1] = True
        return mask

    def answer_mask(self, index: int, prompt_len: int) -> np.ndarray:
        """Rows whose targets are the answer span of sequence ``index``."""
        return self.row_mask(index, prompt_len - 1, int(self.lengths[index]) - 2)

    def prediction_mask(self, index: int) -> np.ndarray:
        """Rows whose targets lie inside sequence ``index``."""
        return self.row_mask(index, 0, int(self.lengths[index]) - 2)

    def last_rows(self) -> np.ndarray:
        return self.starts + self.lengths - 1


@dataclass
class ActivationTrace:
    """Captures inputs and pre-activation outputs of selected linear layers during a forward pass."""

    names: Tuple[str, ...]
    inputs: Dict[str, np.ndarray] = field(default_factory=dict)
    outputs: Dict[str, Tensor] = field(default_factory=dict)


def linear(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    name: Optional[str] = None,
    trace: Optional[ActivationTrace] = None,
) -> Tensor:
    """``x @ weight.T (+ bias)``, optionally recording ``x`` and the output for ``name``."""
    out = ops.matmul(x, ops.transpose(weight))
    if bias is not None:
        out = ops.add(out, bias)
    if trace is not None and name in trace.names:
        trace.inputs[name] = x.values.copy()
        trace.outputs[name] = out.retain_grad()
    return out


def _attention(weights: ModelWeights, x: Tensor, layer: int, mask: Tensor, trace) -> Tensor:
    config = weights.config
    q = linear(x, weights[f"attn_q@{layer}"], name=f"attn_q@{layer}", trace=trace)
    k = linear(x, weights[f"attn_k@{layer}"], name=f"attn_k@{layer}", trace=trace)
    v = linear(x, weights[f"attn_v@{layer}"], name=f"attn_v@{layer}", trace=trace)
    head_dim = config.d_model // config.n_heads
    heads = []
    for h in range(config.n_heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        qh, kh, vh = ops.slice_cols(q, lo, hi), ops.slice_cols(k, lo, hi), ops.slice_cols(v, lo, hi)
        scores = ops.scale(ops.matmul(qh, ops.transpose(kh)), 1.0 / math.sqrt(head_dim))
        probs = ops.softmax(ops.add(scores, mask))
        heads.append(ops.matmul(probs, vh))
    merged = heads[0] if len(heads) == 1 else ops.concat_cols(heads)
    return linear(merged, weights[f"attn_o@{layer}"], name=f"attn_o@{layer}", trace=trace)


def forward(
    weights: ModelWeights, batch: PackedBatch, trace: Optional[ActivationTrace] = None
) -> Tensor:
    """Next-token log-probabilities, one row per packed token (``n_rows x vocab_size``)."""
    mask = ops.constant(batch.attention_mask)
    h = ops.add(
        ops.embedding(weights["embed"], batch.token_ids),
        ops.embedding(weights["pos"], batch.positions),
    )
    for i in range(weights.config.n_layers):
        a = ops.layer_norm(h, weights[f"ln1_g@{i}"], weights[f"ln1_b@{i}"])
        h = ops.add(h, _attention(weights, a, i, mask, trace))
        b = ops.layer_norm(h, weights[f"ln2_g@{i}"], weights[f"ln2_b@{i}"])
        up = linear(b, weights[f"ffn_up@{i}"], weights[f"ffn_up_b@{i}"], f"ffn_up@{i}", trace)
        down = linear(
            ops.gelu(up), weights[f"ffn_down@{i}"], weights[f"ffn_down_b@{i}"], f"ffn_down@{i}", trace
        )
        h = ops.add(h, down)
    final = ops.layer_norm(h, weights["ln_f_g"], weights["ln_f_b"])
    logits = linear(final, weights["head"], name="head", trace=trace)
    return ops.log_softmax(logits)
