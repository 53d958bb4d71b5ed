"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ContractError
from .blocks import ParamStore
from .tensor import Tensor


def gradient_check(loss_fn: Callable[[], Tensor],
                   params: ParamStore | dict[str, Tensor],
                   step: float = 1e-3,
                   samples_per_param: int = 50,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn` must rebuild the scalar loss from the current parameter
    values and be deterministic. Samples up to `samples_per_param`
    coordinates per parameter; relative error uses a
    max(|analytic|, |numeric|, 1e-8) denominator.
    """
    if step <= 0:
        raise ContractError(f"step must be positive, got {step}")
    if isinstance(params, ParamStore):
        params = params.as_dict()
    if rng is None:
        rng = np.random.default_rng(0)

    for t in params.values():
        t.grad = None
    loss_fn().backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    for t in params.values():
        t.grad = None

    worst = 0.0
    for name in sorted(params):
        t = params[name]
        size = t.data.size
        if size <= samples_per_param:
            coords = np.arange(size)
        else:
            coords = np.sort(rng.choice(size, size=samples_per_param, replace=False))
        for flat in coords:
            original = t.data.flat[flat]
            t.data.flat[flat] = original + step
            f_plus = loss_fn().item()
            t.data.flat[flat] = original - step
            f_minus = loss_fn().item()
            t.data.flat[flat] = original
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name].flat[flat]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
