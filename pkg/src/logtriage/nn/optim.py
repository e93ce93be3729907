"""Adam optimizer with classic L2-in-loss regularization on flagged params."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .layers import Param


@dataclass
class AdamState:
    """First/second moment buffers per parameter plus the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Param], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for p in params:
            if p.name in state.m:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        return state


def adam_step(params: list[Param], state: AdamState, lr: float, l2: float = 0.0) -> None:
    """One bias-corrected Adam update over all params, in place.

    For params flagged .l2, 2*l2*param is added to the gradient before the
    moment updates (L2 penalty in the loss, not decoupled weight decay).
    """
    state.t += 1
    k = kernels()
    for p in params:
        wd2 = 2.0 * l2 if p.l2 else 0.0
        k.adam_update(
            p.data.reshape(-1),
            p.grad.reshape(-1),
            state.m[p.name].reshape(-1),
            state.v[p.name].reshape(-1),
            state.t,
            lr,
            state.beta1,
            state.beta2,
            state.eps,
            wd2,
        )
