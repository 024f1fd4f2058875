"""AdamW with decoupled weight decay, exactly the four displayed updates:

    m_t = b1*m + (1-b1)*g
    v_t = b2*v + (1-b2)*g^2
    mhat = m_t/(1-b1^t),  vhat = v_t/(1-b2^t)
    theta <- theta - lr*(mhat/(sqrt(vhat)+eps) + wd*theta)

Weight decay never touches the gradient moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .nn import DannParams


@dataclass
class OptimizerState:
    """First/second moments per parameter and a shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def create(cls, params: DannParams) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(params.weights[k]) for k in params.parameter_keys()},
            v={k: np.zeros_like(params.weights[k]) for k in params.parameter_keys()},
        )


def adamw_step(
    params: DannParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.99,
    weight_decay: float = 0.01,
    eps: float = 1e-8,
) -> tuple[DannParams, OptimizerState]:
    """One update over every parameter; returns params with fresh arrays.

    Batchnorm running statistics are buffers, not parameters, and pass
    through untouched.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_weights: dict[str, np.ndarray] = {}
    for key in params.parameter_keys():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {key!r}")
        theta = params.weights[key]
        m = state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        v = state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        new_weights[key] = theta - lr * (
            mhat / (np.sqrt(vhat) + eps) + weight_decay * theta
        )
    return DannParams(params.config, new_weights, params.bn_states), state
