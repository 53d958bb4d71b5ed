"""Plain SGD with global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
             lr: float, clip: float) -> None:
    """theta <- theta - lr * g after clipping the global gradient norm to
    `clip`. Updates in place, deterministically (sorted name order)."""
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    if clip <= 0:
        raise ContractError(f"clip must be positive, got {clip}")
    norm = global_grad_norm(grads)
    factor = clip / norm if norm > clip else 1.0
    for name in sorted(grads):
        if name not in params:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        params[name].data -= lr * factor * grads[name]
