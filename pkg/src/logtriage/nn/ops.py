"""Functional tensor operations (forward surface + weighted softmax cross-entropy).

Single-sample inputs (T, C) are accepted everywhere and promoted to a batch
of one; batched inputs are (B, T, C).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None, ...], True
    if x.ndim == 3:
        return x, False
    raise ValueError(f"expected a 2D or 3D array, got shape {x.shape}")


def conv1d(input, kernels_w, bias):
    """Same-length 1D convolution with zero padding of (K-1)/2 on both ends."""
    x, single = _batched(input)
    w = np.asarray(kernels_w)
    b = np.asarray(bias)
    if w.ndim != 3:
        raise ValueError(f"kernels must be (K, C_in, C_out), got shape {w.shape}")
    K, cin, cout = w.shape
    if K % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {K}")
    if x.shape[2] != cin:
        raise ValueError(f"input has {x.shape[2]} channels, kernels expect {cin}")
    if b.shape != (cout,):
        raise ValueError(f"bias must have shape ({cout},), got {b.shape}")
    y = kernels().conv1d_forward(np.ascontiguousarray(x), np.ascontiguousarray(w), b)
    return y[0] if single else y


def embedding_lookup(ids, table):
    """Row gather: output[t] = table[ids[t]]."""
    ids = np.asarray(ids)
    table = np.asarray(table)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(
            f"ids must lie in [0, {table.shape[0]}), got range "
            f"[{ids.min()}, {ids.max()}]"
        )
    return table[ids]


def dense(input, weight, bias):
    """Affine map over the last axis, broadcasting over leading axes."""
    x = np.asarray(input)
    w = np.asarray(weight)
    b = np.asarray(bias)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"input last dim {x.shape[-1]} != weight rows {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"bias must have shape ({w.shape[1]},), got {b.shape}")
    return x @ w + b


def global_max_pool1d(input):
    """Per-channel max over the time axis."""
    x, single = _batched(input)
    if x.shape[1] < 1:
        raise ValueError("global_max_pool1d requires at least one timestep")
    y, _ = kernels().maxpool_forward(np.ascontiguousarray(x))
    return y[0] if single else y


@dataclass
class LstmParams:
    """Gate-stacked LSTM weights; order along the 4H axis is [i, f, g, o]."""

    w: np.ndarray  # (D, 4H)
    u: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)
    w_rev: np.ndarray | None = None
    u_rev: np.ndarray | None = None
    b_rev: np.ndarray | None = None


def lstm_forward(inputs, params: LstmParams, return_sequences=True, bidirectional=False):
    """LSTM over a sequence from zero initial states.

    Bidirectional mode concatenates a reversed-direction pass along channels;
    with return_sequences=False only the final state(s) are returned.
    """
    x, single = _batched(inputs)
    x = np.ascontiguousarray(x)
    if x.shape[2] != params.w.shape[0]:
        raise ValueError(f"input dim {x.shape[2]} != weight rows {params.w.shape[0]}")
    h, _, _ = kernels().lstm_forward(x, params.w, params.u, params.b)
    if bidirectional:
        if params.w_rev is None:
            raise ValueError("bidirectional pass requires reverse-direction parameters")
        xr = np.ascontiguousarray(x[:, ::-1, :])
        hr, _, _ = kernels().lstm_forward(xr, params.w_rev, params.u_rev, params.b_rev)
        out = (
            np.concatenate([h, hr[:, ::-1, :]], axis=2)
            if return_sequences
            else np.concatenate([h[:, -1, :], hr[:, -1, :]], axis=1)
        )
    else:
        out = h if return_sequences else h[:, -1, :]
    return out[0] if single else out


def softmax(logits):
    """Row-wise softmax with max subtraction, over the last axis."""
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets, class_weights=None):
    """Class-weighted mean cross-entropy and its gradient w.r.t. the logits.

    loss = (1/B) * sum_b weight[y_b] * (-log softmax(logits_b)[y_b])
    """
    z = np.asarray(logits)
    y = np.asarray(targets)
    if z.ndim != 2:
        raise ValueError(f"logits must be 2D (batch, classes), got shape {z.shape}")
    B, C = z.shape
    if y.shape != (B,):
        raise ValueError(f"targets must have shape ({B},), got {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= C):
        raise ValueError(f"target ids must lie in [0, {C})")
    if class_weights is None:
        wts = np.ones(C, dtype=z.dtype)
    else:
        wts = np.asarray(class_weights, dtype=z.dtype)
        if wts.shape != (C,):
            raise ValueError(f"class_weights must have shape ({C},), got {wts.shape}")
        if np.any(wts <= 0):
            raise ValueError("class weights must be positive")
    probs = softmax(z)
    rows = np.arange(B)
    sample_w = wts[y]
    # clip only guards the log; the gradient uses the exact probabilities
    loss = float(np.mean(sample_w * -np.log(np.maximum(probs[rows, y], 1e-30))))
    grad = probs * (sample_w / B)[:, None]
    grad[rows, y] -= sample_w / B
    grad = grad.astype(z.dtype, copy=False)
    return loss, grad
