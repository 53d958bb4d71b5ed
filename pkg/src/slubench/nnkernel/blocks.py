"""Attention, crossmodal, and recurrent building blocks over the tensor core.

Parameters live in a ParamStore keyed by dotted names; initialization is
uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for weights (fan_in = input
rows), same with fan_in = embedding width for embedding tables, zeros
for biases and layer-norm shifts, ones for layer-norm gains. Creation
order is fixed by the callers, so a fixed seed gives bit-identical
initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int
    n_heads: int
    causal: bool = False

    def __post_init__(self):
        if self.d_model <= 0 or self.n_heads <= 0:
            raise ContractError("attention dimensions must be positive")
        if self.d_model % self.n_heads:
            raise ContractError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


class ParamStore:
    """Named trainable tensors plus the RNG that initialized them."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ContractError(f"parameter {name!r} already registered")
        t = Tensor(data)
        self._params[name] = t
        return t

    def weight(self, name: str, rows: int, cols: int) -> Tensor:
        bound = 1.0 / math.sqrt(rows)
        return self._register(name, self.rng.uniform(-bound, bound, (rows, cols)))

    def embedding(self, name: str, rows: int, cols: int) -> Tensor:
        bound = 1.0 / math.sqrt(cols)
        return self._register(name, self.rng.uniform(-bound, bound, (rows, cols)))

    def zeros(self, name: str, rows: int, cols: int) -> Tensor:
        return self._register(name, np.zeros((rows, cols)))

    def ones(self, name: str, rows: int, cols: int) -> Tensor:
        return self._register(name, np.ones((rows, cols)))

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def as_dict(self) -> dict[str, Tensor]:
        return dict(self._params)

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._params.items()
        }

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, data in values.items():
            t = self[name]
            if t.data.shape != data.shape:
                raise ContractError(
                    f"parameter {name!r}: shape {data.shape} != {t.data.shape}"
                )
            t.data = np.array(data, dtype=np.float64)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}


def init_attention(store: ParamStore, prefix: str, d_model: int) -> None:
    for side in ("q", "k", "v", "o"):
        store.weight(f"{prefix}.w{side}", d_model, d_model)
        store.zeros(f"{prefix}.b{side}", 1, d_model)


def multi_head_attention(query_seq: Tensor, kv_seq: Tensor, cfg: AttentionConfig,
                         store: ParamStore, prefix: str,
                         mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention, queries from `query_seq`, keys and
    values from `kv_seq`. Optional boolean mask of shape (Lq, Lk) marks
    attendable positions; the causal flag adds a lower-triangular mask."""
    lq, lk = query_seq.shape[0], kv_seq.shape[0]
    if query_seq.shape[1] != cfg.d_model or kv_seq.shape[1] != cfg.d_model:
        raise ContractError(
            f"attention inputs must have width {cfg.d_model}: "
            f"{query_seq.shape} / {kv_seq.shape}"
        )
    q = T.add(T.matmul(query_seq, store[f"{prefix}.wq"]), store[f"{prefix}.bq"])
    k = T.add(T.matmul(kv_seq, store[f"{prefix}.wk"]), store[f"{prefix}.bk"])
    v = T.add(T.matmul(kv_seq, store[f"{prefix}.wv"]), store[f"{prefix}.bv"])

    full_mask = mask
    if cfg.causal:
        tri = np.tril(np.ones((lq, lk), dtype=bool))
        full_mask = tri if full_mask is None else (full_mask & tri)

    heads = []
    inv_scale = 1.0 / math.sqrt(cfg.d_head)
    for h in range(cfg.n_heads):
        lo, hi = h * cfg.d_head, (h + 1) * cfg.d_head
        qh = T.slice_cols(q, lo, hi)
        kh = T.slice_cols(k, lo, hi)
        vh = T.slice_cols(v, lo, hi)
        scores = T.scale_shift(T.matmul(qh, T.transpose(kh)), inv_scale)
        weights = T.softmax_rows(scores, mask=full_mask)
        heads.append(T.matmul(weights, vh))
    merged = T.concat_cols(heads)
    return T.add(T.matmul(merged, store[f"{prefix}.wo"]), store[f"{prefix}.bo"])


def multi_head_self_attention(x: Tensor, cfg: AttentionConfig, store: ParamStore,
                              prefix: str, mask: np.ndarray | None = None) -> Tensor:
    return multi_head_attention(x, x, cfg, store, prefix, mask=mask)


def init_feed_forward(store: ParamStore, prefix: str, d_model: int, d_ff: int) -> None:
    store.weight(f"{prefix}.w1", d_model, d_ff)
    store.zeros(f"{prefix}.b1", 1, d_ff)
    store.weight(f"{prefix}.w2", d_ff, d_model)
    store.zeros(f"{prefix}.b2", 1, d_model)


def feed_forward(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    hidden = T.relu(T.add(T.matmul(x, store[f"{prefix}.w1"]), store[f"{prefix}.b1"]))
    return T.add(T.matmul(hidden, store[f"{prefix}.w2"]), store[f"{prefix}.b2"])


def init_block(store: ParamStore, prefix: str, d_model: int,
               d_ff: int | None = None) -> None:
    init_attention(store, f"{prefix}.attn", d_model)
    store.ones(f"{prefix}.ln1.g", 1, d_model)
    store.zeros(f"{prefix}.ln1.b", 1, d_model)
    init_feed_forward(store, f"{prefix}.ffn", d_model, d_ff or 2 * d_model)
    store.ones(f"{prefix}.ln2.g", 1, d_model)
    store.zeros(f"{prefix}.ln2.b", 1, d_model)


def crossmodal_attention_block(target: Tensor, source: Tensor, cfg: AttentionConfig,
                               store: ParamStore, prefix: str,
                               mask: np.ndarray | None = None) -> Tensor:
    """Reinforce `target` with `source` features: attention with queries
    from the target, residual + layer norm, then a position-wise
    feed-forward sublayer with its own residual + layer norm. Output
    length always equals the target length."""
    attended = multi_head_attention(target, source, cfg, store, f"{prefix}.attn", mask=mask)
    a = T.layer_norm(T.add(target, attended), store[f"{prefix}.ln1.g"], store[f"{prefix}.ln1.b"])
    f = feed_forward(a, store, f"{prefix}.ffn")
    return T.layer_norm(T.add(a, f), store[f"{prefix}.ln2.g"], store[f"{prefix}.ln2.b"])


def encoder_layer(x: Tensor, cfg: AttentionConfig, store: ParamStore, prefix: str,
                  mask: np.ndarray | None = None) -> Tensor:
    """Self-attention transformer layer: a crossmodal block with source = target."""
    return crossmodal_attention_block(x, x, cfg, store, prefix, mask=mask)


def init_gru(store: ParamStore, prefix: str, d_in: int, hidden: int,
             bidirectional: bool) -> None:
    directions = ("fwd", "bwd") if bidirectional else ("fwd",)
    for direction in directions:
        for gate in ("z", "r", "c"):
            store.weight(f"{prefix}.{direction}.w{gate}", d_in, hidden)
            store.weight(f"{prefix}.{direction}.u{gate}", hidden, hidden)
            store.zeros(f"{prefix}.{direction}.b{gate}", 1, hidden)


def _gru_pass(x: Tensor, store: ParamStore, prefix: str, hidden: int,
              reverse: bool) -> Tensor:
    length = x.shape[0]
    h = Tensor(np.zeros((1, hidden)))
    steps: list[Tensor | None] = [None] * length
    index = range(length - 1, -1, -1) if reverse else range(length)
    for t in index:
        xt = T.slice_rows(x, t, t + 1)
        z = T.sigmoid(T.add(T.add(T.matmul(xt, store[f"{prefix}.wz"]),
                                  T.matmul(h, store[f"{prefix}.uz"])),
                            store[f"{prefix}.bz"]))
        r = T.sigmoid(T.add(T.add(T.matmul(xt, store[f"{prefix}.wr"]),
                                  T.matmul(h, store[f"{prefix}.ur"])),
                            store[f"{prefix}.br"]))
        c = T.tanh(T.add(T.add(T.matmul(xt, store[f"{prefix}.wc"]),
                               T.matmul(T.mul(r, h), store[f"{prefix}.uc"])),
                         store[f"{prefix}.bc"]))
        h = T.add(T.mul(T.scale_shift(z, -1.0, 1.0), h), T.mul(z, c))
        steps[t] = h
    return T.concat_rows(steps)


def gru_layer(x: Tensor, store: ParamStore, prefix: str, hidden: int,
              bidirectional: bool = False) -> Tensor:
    """Standard GRU recurrence over the rows of x; the bidirectional
    variant concatenates forward and backward passes columnwise."""
    if x.shape[0] < 1:
        raise ContractError("gru_layer: empty input sequence")
    forward = _gru_pass(x, store, f"{prefix}.fwd", hidden, reverse=False)
    if not bidirectional:
        return forward
    backward = _gru_pass(x, store, f"{prefix}.bwd", hidden, reverse=True)
    return T.concat_cols([forward, backward])
