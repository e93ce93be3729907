"""Pure-numpy kernel set (fallback backend).

All functions operate on batched arrays: x is (B, T, C), ids are (B, T).
Gate packing for LSTM arrays is [input, forget, candidate, output] along the
last axis.  Summation orders are fixed, so results are deterministic for
fixed inputs.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-length 1D convolution: y[b,t,o] = b[o] + sum_k,c w[k,c,o] * x[b,t+k-P,c]."""
    B, T, Cin = x.shape
    K, _, Cout = w.shape
    P = (K - 1) // 2
    xp = np.zeros((B, T + K - 1, Cin), dtype=x.dtype)
    xp[:, P : P + T, :] = x
    y = np.empty((B, T, Cout), dtype=x.dtype)
    y[:] = b
    tmp = np.empty((B, T, Cout), dtype=x.dtype)
    for k in range(K):
        np.matmul(xp[:, k : k + T, :], w[k], out=tmp)
        y += tmp
    return y


def conv1d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    B, T, Cin = x.shape
    K, _, Cout = w.shape
    P = (K - 1) // 2
    xp = np.zeros((B, T + K - 1, Cin), dtype=x.dtype)
    xp[:, P : P + T, :] = x
    dw = np.empty_like(w)
    for k in range(K):
        dw[k] = np.matmul(xp[:, k : k + T, :].transpose(0, 2, 1), dy).sum(axis=0)
    db = dy.sum(axis=(0, 1))
    # dx is itself a same-length correlation of dy with the flipped kernel.
    dyp = np.zeros((B, T + 2 * (K - 1), Cout), dtype=dy.dtype)
    dyp[:, K - 1 : K - 1 + T, :] = dy
    dx = np.zeros((B, T, Cin), dtype=x.dtype)
    tmp = np.empty((B, T, Cin), dtype=x.dtype)
    for k in range(K):
        s = (K - 1 - k) + P
        np.matmul(dyp[:, s : s + T, :], w[k].T, out=tmp)
        dx += tmp
    return dx, dw, db


def lstm_forward(x: np.ndarray, w: np.ndarray, u: np.ndarray, b: np.ndarray):
    """Returns (h, c, gates) over all timesteps; initial states are zero."""
    B, T, D = x.shape
    H = u.shape[0]
    xw = x.reshape(B * T, D) @ w
    xw = xw.reshape(B, T, 4 * H)
    h = np.zeros((B, T, H), dtype=x.dtype)
    c = np.zeros((B, T, H), dtype=x.dtype)
    gates = np.empty((B, T, 4 * H), dtype=x.dtype)
    h_prev = np.zeros((B, H), dtype=x.dtype)
    c_prev = np.zeros((B, H), dtype=x.dtype)
    for t in range(T):
        a = xw[:, t, :] + h_prev @ u + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_t = f * c_prev + i * g
        h_t = o * np.tanh(c_t)
        gates[:, t, :H] = i
        gates[:, t, H : 2 * H] = f
        gates[:, t, 2 * H : 3 * H] = g
        gates[:, t, 3 * H :] = o
        c[:, t, :] = c_t
        h[:, t, :] = h_t
        h_prev, c_prev = h_t, c_t
    return h, c, gates


def lstm_backward(x, w, u, h, c, gates, dh_out):
    """Backpropagation through time given upstream gradients on every h_t."""
    B, T, D = x.shape
    H = u.shape[0]
    dx = np.empty_like(x)
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * H, dtype=x.dtype)
    dh_rec = np.zeros((B, H), dtype=x.dtype)
    dc_rec = np.zeros((B, H), dtype=x.dtype)
    da = np.empty((B, 4 * H), dtype=x.dtype)
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :H]
        f = gates[:, t, H : 2 * H]
        g = gates[:, t, 2 * H : 3 * H]
        o = gates[:, t, 3 * H :]
        c_t = c[:, t, :]
        c_prev = c[:, t - 1, :] if t > 0 else np.zeros((B, H), dtype=x.dtype)
        h_prev = h[:, t - 1, :] if t > 0 else np.zeros((B, H), dtype=x.dtype)
        tanh_c = np.tanh(c_t)
        dh = dh_out[:, t, :] + dh_rec
        dc = dc_rec + dh * o * (1.0 - tanh_c * tanh_c)
        da[:, :H] = (dc * g) * i * (1.0 - i)
        da[:, H : 2 * H] = (dc * c_prev) * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = (dc * i) * (1.0 - g * g)
        da[:, 3 * H :] = (dh * tanh_c) * o * (1.0 - o)
        dx[:, t, :] = da @ w.T
        dh_rec = da @ u.T
        dc_rec = dc * f
        dw += x[:, t, :].T @ da
        du += h_prev.T @ da
        db += da.sum(axis=0)
    return dx, dw, du, db


def embedding_backward(ids: np.ndarray, dy: np.ndarray, vocab_size: int) -> np.ndarray:
    E = dy.shape[-1]
    dtable = np.zeros((vocab_size, E), dtype=dy.dtype)
    np.add.at(dtable, ids.ravel(), dy.reshape(-1, E))
    return dtable


def maxpool_forward(x: np.ndarray):
    """Global max over time; argmax keeps the first maximum per channel."""
    idx = x.argmax(axis=1)
    y = np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :]
    return y, idx


def maxpool_backward(idx: np.ndarray, dy: np.ndarray, T: int) -> np.ndarray:
    B, C = dy.shape
    dx = np.zeros((B, T, C), dtype=dy.dtype)
    dx[np.arange(B)[:, None], idx, np.arange(C)[None, :]] = dy
    return dx


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps, wd2):
    """In-place Adam step on flat arrays; wd2 = 2*l2 is added to the gradient."""
    if wd2 != 0.0:
        g = g + wd2 * p
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
