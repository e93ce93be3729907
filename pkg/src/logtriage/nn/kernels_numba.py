"""Numba kernel set: @njit hot loops, batch-parallel where it pays.

Mirrors the function surface and numerics of ``kernels_numpy``.  Matrix work
goes through np.dot (BLAS) on statically contiguous 2D slices; gate math and
scatter updates are fused scalar loops.  Reductions accumulate in fixed batch
order so results stay deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

NAME = "numba"


@njit(cache=True, inline="always")
def _sig(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, parallel=True)
def conv1d_forward(x, w, b):
    B, T, Cin = x.shape
    K, _, Cout = w.shape
    P = (K - 1) // 2
    y = np.empty((B, T, Cout), x.dtype)
    for bi in prange(B):
        xp = np.zeros((T + K - 1, Cin), x.dtype)
        xp[P : P + T] = x[bi]
        yb = y[bi]
        for t in range(T):
            for o in range(Cout):
                yb[t, o] = b[o]
        for k in range(K):
            yb += np.dot(xp[k : k + T], w[k])
    return y


@njit(cache=True, parallel=True)
def conv1d_backward(x, w, dy):
    B, T, Cin = x.shape
    K, _, Cout = w.shape
    P = (K - 1) // 2
    dx = np.empty((B, T, Cin), dy.dtype)
    dw_parts = np.empty((B, K, Cin, Cout), dy.dtype)
    for bi in prange(B):
        xp = np.zeros((T + K - 1, Cin), x.dtype)
        xp[P : P + T] = x[bi]
        dyb = dy[bi]
        # dx is a same-length correlation of padded dy with the flipped kernel
        dyp = np.zeros((T + 2 * (K - 1), Cout), dy.dtype)
        dyp[K - 1 : K - 1 + T] = dyb
        dxb = np.zeros((T, Cin), dy.dtype)
        for k in range(K):
            dw_parts[bi, k] = np.dot(xp[k : k + T].T, dyb)
            s = (K - 1 - k) + P
            dxb += np.dot(dyp[s : s + T], w[k].T)
        dx[bi] = dxb
    # fixed-order reductions keep the result deterministic
    dw = np.zeros((K, Cin, Cout), dy.dtype)
    for bi in range(B):
        dw += dw_parts[bi]
    db = np.zeros(Cout, dy.dtype)
    for bi in range(B):
        for t in range(T):
            for o in range(Cout):
                db[o] += dy[bi, t, o]
    return dx, dw, db


@njit(cache=True)
def lstm_forward(x, w, u, b):
    B, T, D = x.shape
    H = u.shape[0]
    xw = np.dot(x.copy().reshape(B * T, D), w).reshape(B, T, 4 * H)
    h = np.zeros((B, T, H), x.dtype)
    c = np.zeros((B, T, H), x.dtype)
    gates = np.empty((B, T, 4 * H), x.dtype)
    h_prev = np.zeros((B, H), x.dtype)
    c_prev = np.zeros((B, H), x.dtype)
    for t in range(T):
        a = np.dot(h_prev, u)
        for bi in range(B):
            for j in range(H):
                ai = xw[bi, t, j] + a[bi, j] + b[j]
                af = xw[bi, t, H + j] + a[bi, H + j] + b[H + j]
                ag = xw[bi, t, 2 * H + j] + a[bi, 2 * H + j] + b[2 * H + j]
                ao = xw[bi, t, 3 * H + j] + a[bi, 3 * H + j] + b[3 * H + j]
                ig = _sig(ai)
                fg = _sig(af)
                gg = math.tanh(ag)
                og = _sig(ao)
                cc = fg * c_prev[bi, j] + ig * gg
                hh = og * math.tanh(cc)
                gates[bi, t, j] = ig
                gates[bi, t, H + j] = fg
                gates[bi, t, 2 * H + j] = gg
                gates[bi, t, 3 * H + j] = og
                c[bi, t, j] = cc
                h[bi, t, j] = hh
                c_prev[bi, j] = cc
                h_prev[bi, j] = hh
    return h, c, gates


@njit(cache=True)
def lstm_backward(x, w, u, h, c, gates, dh_out):
    B, T, D = x.shape
    H = u.shape[0]
    # time-major contiguous copies so the per-step dots hit BLAS
    xT = np.ascontiguousarray(x.transpose(1, 0, 2))
    hT = np.ascontiguousarray(h.transpose(1, 0, 2))
    dxT = np.empty((T, B, D), x.dtype)
    dw = np.zeros((D, 4 * H), x.dtype)
    du = np.zeros((H, 4 * H), x.dtype)
    db = np.zeros(4 * H, x.dtype)
    dh_rec = np.zeros((B, H), x.dtype)
    dc_rec = np.zeros((B, H), x.dtype)
    da = np.empty((B, 4 * H), x.dtype)
    for t in range(T - 1, -1, -1):
        for bi in range(B):
            for j in range(H):
                i = gates[bi, t, j]
                f = gates[bi, t, H + j]
                g = gates[bi, t, 2 * H + j]
                o = gates[bi, t, 3 * H + j]
                c_t = c[bi, t, j]
                c_pv = c[bi, t - 1, j] if t > 0 else 0.0
                tanh_c = math.tanh(c_t)
                dh = dh_out[bi, t, j] + dh_rec[bi, j]
                dc = dc_rec[bi, j] + dh * o * (1.0 - tanh_c * tanh_c)
                da[bi, j] = (dc * g) * i * (1.0 - i)
                da[bi, H + j] = (dc * c_pv) * f * (1.0 - f)
                da[bi, 2 * H + j] = (dc * i) * (1.0 - g * g)
                da[bi, 3 * H + j] = (dh * tanh_c) * o * (1.0 - o)
                dc_rec[bi, j] = dc * f
        dxT[t] = np.dot(da, w.T)
        dh_new = np.dot(da, u.T)
        for bi in range(B):
            for j in range(H):
                dh_rec[bi, j] = dh_new[bi, j]
        dw += np.dot(xT[t].T, da)
        if t > 0:
            du += np.dot(hT[t - 1].T, da)
        for bi in range(B):
            for j4 in range(4 * H):
                db[j4] += da[bi, j4]
    dx = np.ascontiguousarray(dxT.transpose(1, 0, 2))
    return dx, dw, du, db


@njit(cache=True)
def embedding_backward(ids, dy, vocab_size):
    B, T, E = dy.shape
    dtable = np.zeros((vocab_size, E), dy.dtype)
    for bi in range(B):
        for t in range(T):
            r = ids[bi, t]
            for e in range(E):
                dtable[r, e] += dy[bi, t, e]
    return dtable


@njit(cache=True, parallel=True)
def maxpool_forward(x):
    B, T, C = x.shape
    y = np.empty((B, C), x.dtype)
    idx = np.empty((B, C), np.int64)
    for bi in prange(B):
        for ch in range(C):
            best = x[bi, 0, ch]
            best_t = 0
            for t in range(1, T):
                v = x[bi, t, ch]
                if v > best:
                    best = v
                    best_t = t
            y[bi, ch] = best
            idx[bi, ch] = best_t
    return y, idx


@njit(cache=True, parallel=True)
def maxpool_backward(idx, dy, T):
    B, C = dy.shape
    dx = np.zeros((B, T, C), dy.dtype)
    for bi in prange(B):
        for ch in range(C):
            dx[bi, idx[bi, ch], ch] = dy[bi, ch]
    return dx


@njit(cache=True)
def adam_update(p, g, m, v, t, lr, beta1, beta2, eps, wd2):
    n = p.shape[0]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(n):
        gi = g[i] + wd2 * p[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m_hat = m[i] / c1
        v_hat = v[i] / c2
        p[i] -= lr * m_hat / (math.sqrt(v_hat) + eps)
