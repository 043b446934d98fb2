"""Single-layer LSTM with additive attention pooling and a linear head.

Shapes: a window is (T, D) or a batch of windows (B, T, D). Gates use the
order input, forget, output, candidate; parameters are kept per gate so
they line up one-to-one with their gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericError

GATES = ("i", "f", "o", "g")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    arrays: dict[str, np.ndarray]

    @property
    def hidden_size(self) -> int:
        return self.arrays["U_i"].shape[0]

    @property
    def input_dim(self) -> int:
        return self.arrays["W_i"].shape[1]

    def copy(self) -> "LstmParams":
        return LstmParams({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "LstmParams":
        return LstmParams({k: np.zeros_like(v) for k, v in self.arrays.items()})

    def __getitem__(self, key):
        return self.arrays[key]

    def keys(self):
        return self.arrays.keys()

    def stacked(self):
        """Gate blocks concatenated as (4H, D), (4H, H), (4H,)."""
        a = self.arrays
        return (
            np.concatenate([a[f"W_{g}"] for g in GATES]),
            np.concatenate([a[f"U_{g}"] for g in GATES]),
            np.concatenate([a[f"b_{g}"] for g in GATES]),
        )


def param_shapes(input_dim: int, hidden_size: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for g in GATES:
        shapes[f"W_{g}"] = (hidden_size, input_dim)
        shapes[f"U_{g}"] = (hidden_size, hidden_size)
        shapes[f"b_{g}"] = (hidden_size,)
    shapes["W_a"] = (hidden_size, hidden_size)
    shapes["v"] = (hidden_size,)
    shapes["w_d"] = (hidden_size,)
    shapes["b_d"] = ()
    return shapes


def init_params(input_dim: int, hidden_size: int, rng: np.random.Generator) -> LstmParams:
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    if input_dim < 1 or hidden_size < 1:
        raise DataError(f"dims must be >= 1, got input_dim={input_dim}, hidden_size={hidden_size}")
    arrays = {}
    for name, shape in param_shapes(input_dim, hidden_size).items():
        if name.startswith("b_"):
            arrays[name] = np.zeros(shape)
        else:
            fan_out = shape[0] if len(shape) == 2 else 1
            fan_in = shape[1] if len(shape) == 2 else shape[0]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    arrays["b_f"] = np.ones(hidden_size)
    return LstmParams(arrays)


def validate_params(params: LstmParams, input_dim: int | None = None) -> None:
    D = params.input_dim if input_dim is None else input_dim
    expected = param_shapes(D, params.hidden_size)
    if set(expected) != set(params.keys()):
        raise DataError(f"parameter set mismatch: {sorted(set(expected) ^ set(params.keys()))}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise DataError(f"{name} has shape {params[name].shape}, expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise NumericError(f"{name} contains non-finite values")


def forward(params: LstmParams, window, train_mode: bool = False, dropout_mask=None,
            dropout_rate: float = 0.0):
    """Run the network on one window or a batch.

    In train mode with ``dropout_rate > 0`` the attention context is
    multiplied by ``dropout_mask`` and scaled by 1 / (1 - rate).

    Returns:
        (prediction, cache): a scalar for a single window or a (B,) array.
    """
    X = np.asarray(window, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != params.input_dim:
        raise DataError(f"window must be (T, {params.input_dim}) or (B, T, {params.input_dim}); got {np.shape(window)}")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite values in input window")
    use_dropout = train_mode and dropout_rate > 0
    if use_dropout != (dropout_mask is not None):
        raise DataError("dropout_mask must be given exactly when training with dropout_rate > 0")

    B, T, _ = X.shape
    H = params.hidden_size
    W, U, b = params.stacked()
    pre_x = X @ W.T + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    acts = np.empty((T, B, 4 * H))
    cells = np.empty((T + 1, B, H))
    tanh_c = np.empty((T, B, H))
    hs = np.empty((B, T, H))
    cells[0] = c
    for t in range(T):
        z = pre_x[:, t] + h @ U.T
        a = acts[t]
        a[:, :3 * H] = sigmoid(z[:, :3 * H])
        a[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 3 * H:]
        tc = np.tanh(c)
        h = a[:, 2 * H:3 * H] * tc
        cells[t + 1] = c
        tanh_c[t] = tc
        hs[:, t] = h

    u = np.tanh(hs @ params["W_a"].T)
    scores = u @ params["v"]
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    alpha = e / e.sum(axis=1, keepdims=True)
    context = (alpha[:, None, :] @ hs)[:, 0]
    if use_dropout:
        mask = np.asarray(dropout_mask, dtype=float).reshape(B, H)
        keep_scale = mask / (1.0 - dropout_rate)
    else:
        keep_scale = np.ones((B, H))
    dropped = context * keep_scale
    y = dropped @ params["w_d"] + params["b_d"]

    cache = {
        "X": X, "acts": acts, "cells": cells, "tanh_c": tanh_c, "hs": hs,
        "u": u, "alpha": alpha, "context": context, "keep_scale": keep_scale,
        "dropped": dropped, "single": single,
    }
    return (float(y[0]) if single else y), cache


def backward(params: LstmParams, cache: dict, loss_gradient) -> LstmParams:
    """Gradients of the loss w.r.t. every parameter, summed over the batch.

    ``loss_gradient`` is dLoss/dprediction: a scalar for a single window or a
    (B,) array.
    """
    X, hs = cache["X"], cache["hs"]
    B, T, _ = X.shape
    H = params.hidden_size
    if hs.shape[2] != H or X.shape[2] != params.input_dim:
        raise DataError("cache does not match parameter shapes")
    dy = np.asarray(loss_gradient, dtype=float).reshape(B)
    grads = params.zeros_like().arrays

    grads["b_d"] = np.array(dy.sum())
    grads["w_d"] = dy @ cache["dropped"]
    d_context = (dy[:, None] * params["w_d"][None, :]) * cache["keep_scale"]

    alpha, u = cache["alpha"], cache["u"]
    dh = alpha[:, :, None] * d_context[:, None, :]
    d_alpha = (hs @ d_context[:, :, None])[:, :, 0]
    d_scores = alpha * (d_alpha - (alpha * d_alpha).sum(axis=1, keepdims=True))
    grads["v"] = (d_scores[:, :, None] * u).sum(axis=(0, 1))
    d_pre_att = d_scores[:, :, None] * params["v"][None, None, :] * (1.0 - u * u)
    grads["W_a"] = d_pre_att.reshape(B * T, H).T @ hs.reshape(B * T, H)
    dh = dh + d_pre_att @ params["W_a"]

    _, U, _ = params.stacked()
    acts, cells, tanh_c = cache["acts"], cache["cells"], cache["tanh_c"]
    dz = np.empty((B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dZ = np.empty((B, T, 4 * H))
    for t in range(T - 1, -1, -1):
        a = acts[t]
        i, f, o, g = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        d_h = dh[:, t] + dh_next
        tc = tanh_c[t]
        d_c = dc_next + d_h * o * (1.0 - tc * tc)
        sig = a[:, :3 * H]
        dz[:, :H] = d_c * g
        dz[:, H:2 * H] = d_c * cells[t]
        dz[:, 2 * H:3 * H] = d_h * tc
        dz[:, :3 * H] *= sig * (1.0 - sig)
        dz[:, 3 * H:] = d_c * i * (1.0 - g * g)
        dc_next = d_c * f
        dZ[:, t] = dz
        dh_next = dz @ U
    h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1)
    dZ_flat = dZ.reshape(B * T, 4 * H)
    dW = dZ_flat.T @ X.reshape(B * T, -1)
    dU = dZ_flat.T @ h_prev.reshape(B * T, H)
    db = dZ_flat.sum(axis=0)
    for k, gname in enumerate(GATES):
        block = slice(k * H, (k + 1) * H)
        grads[f"W_{gname}"] = dW[block]
        grads[f"U_{gname}"] = dU[block]
        grads[f"b_{gname}"] = db[block]
    return LstmParams(grads)
