"""Linear-chain CRF: log-partition, Viterbi decoding, differentiable NLL.

Scores are emissions[L x K] plus transitions[K x K] between adjacent
labels; all sums run in the log domain. The NLL gradient is exact:
unary/pairwise marginals from forward-backward minus the gold counts.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, _accum


def _as_array(x) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim != 2:
        raise ContractError(f"expected a 2-D score table, got shape {data.shape}")
    return data


def _logsumexp(row: np.ndarray) -> float:
    m = row.max()
    return float(m + np.log(np.exp(row - m).sum()))


def _forward_table(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    length, k = emissions.shape
    alpha = np.empty((length, k))
    alpha[0] = emissions[0]
    for t in range(1, length):
        prev = alpha[t - 1][:, None] + transitions
        m = prev.max(axis=0)
        alpha[t] = emissions[t] + m + np.log(np.exp(prev - m).sum(axis=0))
    return alpha


def _backward_table(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    length, k = emissions.shape
    beta = np.zeros((length, k))
    for t in range(length - 2, -1, -1):
        nxt = transitions + (emissions[t + 1] + beta[t + 1])[None, :]
        m = nxt.max(axis=1)
        beta[t] = m + np.log(np.exp(nxt - m[:, None]).sum(axis=1))
    return beta


def crf_forward(emissions, transitions) -> float:
    """log Z: log-sum-exp over all label sequences."""
    e = _as_array(emissions)
    tr = _as_array(transitions)
    k = e.shape[1]
    if tr.shape != (k, k):
        raise ContractError(f"transitions must be {k}x{k}, got {tr.shape}")
    return _logsumexp(_forward_table(e, tr)[-1])


def crf_viterbi(emissions, transitions) -> tuple[list[int], float]:
    """Max-scoring label sequence; ties break to the smallest label index."""
    e = _as_array(emissions)
    tr = _as_array(transitions)
    length, k = e.shape
    if tr.shape != (k, k):
        raise ContractError(f"transitions must be {k}x{k}, got {tr.shape}")
    trellis = np.empty((length, k))
    backptr = np.zeros((length, k), dtype=int)
    trellis[0] = e[0]
    for t in range(1, length):
        scores = trellis[t - 1][:, None] + tr
        backptr[t] = scores.argmax(axis=0)
        trellis[t] = e[t] + scores.max(axis=0)
    labels = [int(trellis[-1].argmax())]
    for t in range(length - 1, 0, -1):
        labels.append(int(backptr[t][labels[-1]]))
    labels.reverse()
    return labels, float(trellis[-1].max())


def _gold_score(e: np.ndarray, tr: np.ndarray, gold: list[int]) -> float:
    score = float(e[np.arange(len(gold)), gold].sum())
    for a, b in zip(gold, gold[1:]):
        score += float(tr[a, b])
    return score


def crf_nll(emissions: Tensor, transitions: Tensor, gold) -> Tensor:
    """logZ - score(gold); nonnegative and differentiable in both inputs."""
    if not isinstance(emissions, Tensor):
        emissions = Tensor(emissions)
    if not isinstance(transitions, Tensor):
        transitions = Tensor(transitions)
    e = _as_array(emissions)
    tr = _as_array(transitions)
    length, k = e.shape
    if tr.shape != (k, k):
        raise ContractError(f"transitions must be {k}x{k}, got {tr.shape}")
    gold = [int(g) for g in gold]
    if len(gold) != length:
        raise ContractError(f"gold sequence length {len(gold)} != emissions rows {length}")
    if any(g < 0 or g >= k for g in gold):
        raise ContractError(f"gold label out of range [0, {k})")

    alpha = _forward_table(e, tr)
    beta = _backward_table(e, tr)
    log_z = _logsumexp(alpha[-1])
    loss = log_z - _gold_score(e, tr, gold)
    out = Tensor(np.array([[loss]]), (emissions, transitions))

    def bw(g):
        scale = g[0, 0]
        unary = np.exp(alpha + beta - log_z)
        d_e = unary.copy()
        d_e[np.arange(length), gold] -= 1.0
        d_tr = np.zeros_like(tr)
        for t in range(length - 1):
            pair = np.exp(alpha[t][:, None] + tr + (e[t + 1] + beta[t + 1])[None, :] - log_z)
            d_tr += pair
        for a, b in zip(gold, gold[1:]):
            d_tr[a, b] -= 1.0
        _accum(emissions, scale * d_e)
        _accum(transitions, scale * d_tr)
    out._backward = bw
    return out
