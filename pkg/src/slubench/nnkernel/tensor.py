"""Dense 2-D tensors with reverse-mode differentiation.

Every tensor is a float64 matrix; scalars are 1x1, row vectors 1xn.
Operations build a graph of closures; ``backward()`` on a 1x1 loss
accumulates exact analytic gradients additively into every ancestor's
``grad`` slot. Broadcasting in ``add``/``mul`` covers row vectors,
column vectors, and scalars, with gradients summed over broadcast axes.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ContractError(f"tensors are 2-D; got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale_shift(self, float(other), 0.0)
        return mul(self, other)

    def backward(self) -> None:
        if self.data.shape != (1, 1):
            raise ContractError(f"backward() needs a 1x1 loss, got {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones((1, 1))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad += g


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_ok(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = g
    if shape[0] == 1 and out.shape[0] > 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] > 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)
    out._backward = bw
    return out


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ContractError(f"add: incompatible shapes {a.shape} + {b.shape}")
    out = Tensor(a.data + b.data, (a, b))

    def bw(g):
        _accum(a, _reduce_to(g, a.shape))
        _accum(b, _reduce_to(g, b.shape))
    out._backward = bw
    return out


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ContractError(f"mul: incompatible shapes {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data, (a, b))

    def bw(g):
        _accum(a, _reduce_to(g * b.data, a.shape))
        _accum(b, _reduce_to(g * a.data, b.shape))
    out._backward = bw
    return out


def rowwise_scale(x, s) -> Tensor:
    """Scale each row of x by the matching entry of column vector s."""
    x, s = _t(x), _t(s)
    if s.shape != (x.shape[0], 1):
        raise ContractError(f"rowwise_scale: scales must be {x.shape[0]}x1, got {s.shape}")
    return mul(x, s)


def scale_shift(x, scale: float, shift: float = 0.0) -> Tensor:
    x = _t(x)
    out = Tensor(x.data * scale + shift, (x,))

    def bw(g):
        _accum(x, g * scale)
    out._backward = bw
    return out


def tanh(x) -> Tensor:
    x = _t(x)
    y = np.tanh(x.data)
    out = Tensor(y, (x,))

    def bw(g):
        _accum(x, g * (1.0 - y * y))
    out._backward = bw
    return out


def sigmoid(x) -> Tensor:
    x = _t(x)
    y = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = Tensor(y, (x,))

    def bw(g):
        _accum(x, g * y * (1.0 - y))
    out._backward = bw
    return out


def relu(x) -> Tensor:
    x = _t(x)
    out = Tensor(np.maximum(x.data, 0.0), (x,))

    def bw(g):
        _accum(x, g * (x.data > 0))
    out._backward = bw
    return out


def softmax_rows(x, mask: np.ndarray | None = None) -> Tensor:
    """Row softmax with max subtraction; masked entries get exactly 0 weight.

    `mask` is a boolean array of x's shape, True where attendable. Every
    row must keep at least one unmasked entry.
    """
    x = _t(x)
    if mask is None:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ContractError(f"softmax mask shape {mask.shape} != input {x.shape}")
        if not mask.any(axis=1).all():
            raise ContractError("softmax_rows: a row is fully masked")
        finite_max = np.where(mask, x.data, -np.inf).max(axis=1, keepdims=True)
        e = np.exp(x.data - finite_max) * mask
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y, (x,))

    def bw(g):
        gy = g * y
        _accum(x, gy - y * gy.sum(axis=1, keepdims=True))
    out._backward = bw
    return out


def transpose(x) -> Tensor:
    x = _t(x)
    out = Tensor(x.data.T, (x,))

    def bw(g):
        _accum(x, g.T)
    out._backward = bw
    return out


def concat_cols(parts) -> Tensor:
    parts = [_t(p) for p in parts]
    if not parts:
        raise ContractError("concat_cols: nothing to concatenate")
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise ContractError(f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1), tuple(parts))
    splits = np.cumsum([p.shape[1] for p in parts])[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=1)):
            _accum(p, piece)
    out._backward = bw
    return out


def concat_rows(parts) -> Tensor:
    parts = [_t(p) for p in parts]
    if not parts:
        raise ContractError("concat_rows: nothing to concatenate")
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise ContractError(f"concat_rows: column counts differ: {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=0), tuple(parts))
    splits = np.cumsum([p.shape[0] for p in parts])[:-1]

    def bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=0)):
            _accum(p, piece)
    out._backward = bw
    return out


def slice_rows(x, start: int, stop: int) -> Tensor:
    x = _t(x)
    if not 0 <= start < stop <= x.shape[0]:
        raise ContractError(f"slice_rows: [{start}:{stop}] out of range for {x.shape}")
    out = Tensor(x.data[start:stop], (x,))

    def bw(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accum(x, full)
    out._backward = bw
    return out


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = _t(x)
    if not 0 <= start < stop <= x.shape[1]:
        raise ContractError(f"slice_cols: [{start}:{stop}] out of range for {x.shape}")
    out = Tensor(x.data[:, start:stop], (x,))

    def bw(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        _accum(x, full)
    out._backward = bw
    return out


def mean_rows(x) -> Tensor:
    """Column means: collapses an Lxd sequence into a 1xd pooled vector."""
    x = _t(x)
    m = x.shape[0]
    out = Tensor(x.data.mean(axis=0, keepdims=True), (x,))

    def bw(g):
        _accum(x, np.repeat(g / m, m, axis=0))
    out._backward = bw
    return out


def broadcast_rows(x, rows: int) -> Tensor:
    """Tile a 1xn row vector to rows x n."""
    x = _t(x)
    if x.shape[0] != 1:
        raise ContractError(f"broadcast_rows: expected a row vector, got {x.shape}")
    out = Tensor(np.repeat(x.data, rows, axis=0), (x,))

    def bw(g):
        _accum(x, g.sum(axis=0, keepdims=True))
    out._backward = bw
    return out


def sum_all(x) -> Tensor:
    x = _t(x)
    out = Tensor(np.array([[x.data.sum()]]), (x,))

    def bw(g):
        _accum(x, np.full_like(x.data, g[0, 0]))
    out._backward = bw
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Per-row normalization with learned 1xd gain and bias."""
    x, gain, bias = _t(x), _t(gain), _t(bias)
    d = x.shape[1]
    if gain.shape != (1, d) or bias.shape != (1, d):
        raise ContractError(
            f"layer_norm: gain/bias must be 1x{d}, got {gain.shape}/{bias.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    sd = np.sqrt(var + eps)
    xhat = (x.data - mu) / sd
    out = Tensor(xhat * gain.data + bias.data, (x, gain, bias))

    def bw(g):
        _accum(gain, (g * xhat).sum(axis=0, keepdims=True))
        _accum(bias, g.sum(axis=0, keepdims=True))
        gx = g * gain.data
        _accum(x, (gx - gx.mean(axis=1, keepdims=True)
                   - xhat * (gx * xhat).mean(axis=1, keepdims=True)) / sd)
    out._backward = bw
    return out


def embedding_gather(table, ids) -> Tensor:
    table = _t(table)
    ids = [int(i) for i in ids]
    if not ids:
        raise ContractError("embedding_gather: empty id list")
    if any(i < 0 or i >= table.shape[0] for i in ids):
        raise ContractError(f"embedding_gather: id out of range for table {table.shape}")
    out = Tensor(table.data[ids], (table,))

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        _accum(table, full)
    out._backward = bw
    return out


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under row softmax."""
    logits = _t(logits)
    labels = [int(l) for l in labels]
    m, k = logits.shape
    if len(labels) != m:
        raise ContractError(f"cross_entropy: {len(labels)} labels for {m} rows")
    if any(l < 0 or l >= k for l in labels):
        raise ContractError(f"cross_entropy: label out of range [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(m), labels].mean()
    out = Tensor(np.array([[loss]]), (logits,))

    def bw(g):
        soft = np.exp(logp)
        soft[np.arange(m), labels] -= 1.0
        _accum(logits, g[0, 0] * soft / m)
    out._backward = bw
    return out
