"""Adam with element-wise gradient value clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .network import LstmParams

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: LstmParams) -> "AdamState":
        return cls(
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
            0,
        )


def adam_step(state: AdamState, params: LstmParams, gradients: LstmParams,
              learning_rate: float = 0.001, clip_value: float | None = 0.5):
    """One clipped, bias-corrected Adam update; returns new (state, params)."""
    if set(params.keys()) != set(gradients.keys()):
        raise DataError("gradient and parameter sets differ")
    if not state.m:
        state = AdamState.for_params(params)
    step = state.step + 1
    new_m, new_v, new_p = {}, {}, {}
    c1 = 1.0 - BETA1**step
    c2 = 1.0 - BETA2**step
    for k, p in params.arrays.items():
        g = np.asarray(gradients[k], dtype=float)
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise DataError(f"shape mismatch for {k}: param {p.shape}, gradient {g.shape}")
        if clip_value is not None:
            g = np.clip(g, -clip_value, clip_value)
        m = BETA1 * state.m[k] + (1.0 - BETA1) * g
        v = BETA2 * state.v[k] + (1.0 - BETA2) * g * g
        new_m[k], new_v[k] = m, v
        new_p[k] = np.asarray(p - learning_rate * (m / c1) / (np.sqrt(v / c2) + EPSILON))
    return AdamState(new_m, new_v, step), LstmParams(new_p)
