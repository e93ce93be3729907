"""Trainable layers: forward plus explicit backward, gradients accumulated on Params."""

from __future__ import annotations

import numpy as np

from .backend import kernels


class Param:
    """A named parameter tensor with a matching gradient buffer."""

    __slots__ = ("name", "data", "grad", "l2")

    def __init__(self, name: str, data: np.ndarray, l2: bool = False):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)
        self.l2 = l2

    def zero_grad(self):
        self.grad[...] = 0


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal_stacked(rng, size, blocks, dtype):
    """Stack `blocks` orthogonal (size, size) matrices along columns."""
    mats = []
    for _ in range(blocks):
        a = rng.standard_normal((size, size))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        mats.append(q)
    return np.concatenate(mats, axis=1).astype(dtype)


class Layer:
    def params(self) -> list[Param]:
        return []

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


class Embedding(Layer):
    def __init__(self, vocab_size, dim, rng, dtype=np.float32, init_table=None, name="embedding"):
        if init_table is not None:
            init_table = np.asarray(init_table, dtype=dtype)
            if init_table.shape != (vocab_size, dim):
                raise ValueError(
                    f"init embeddings have shape {init_table.shape}, expected {(vocab_size, dim)}"
                )
            table = init_table.copy()
        else:
            table = rng.uniform(-0.05, 0.05, size=(vocab_size, dim)).astype(dtype)
        self.table = Param(name, table)
        self.vocab_size = vocab_size
        self._ids = None

    def forward(self, ids):
        ids = np.ascontiguousarray(ids, dtype=np.int32)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError(f"ids out of range for vocab of size {self.vocab_size}")
        self._ids = ids
        return self.table.data[ids]

    def backward(self, dy):
        self.table.grad += kernels().embedding_backward(
            self._ids, np.ascontiguousarray(dy), self.vocab_size
        )
        return None

    def params(self):
        return [self.table]


class Conv1D(Layer):
    def __init__(self, cin, cout, kernel_size, rng, dtype=np.float32, name="conv"):
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        fan_in = cin * kernel_size
        fan_out = cout * kernel_size
        self.w = Param(f"{name}.w", glorot_uniform(rng, (kernel_size, cin, cout), fan_in, fan_out, dtype))
        self.b = Param(f"{name}.b", np.zeros(cout, dtype=dtype))
        self._x = None

    def forward(self, x):
        self._x = np.ascontiguousarray(x)
        return kernels().conv1d_forward(self._x, self.w.data, self.b.data)

    def backward(self, dy):
        dx, dw, db = kernels().conv1d_backward(self._x, self.w.data, np.ascontiguousarray(dy))
        self.w.grad += dw
        self.b.grad += db
        return dx

    def params(self):
        return [self.w, self.b]


class Dense(Layer):
    """Affine layer over the last axis; flagged for L2 regularization."""

    def __init__(self, din, dout, rng, dtype=np.float32, l2=True, name="dense"):
        self.w = Param(f"{name}.w", glorot_uniform(rng, (din, dout), din, dout, dtype), l2=l2)
        self.b = Param(f"{name}.b", np.zeros(dout, dtype=dtype))
        self._x2d = None
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        self._x2d = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
        y = self._x2d @ self.w.data + self.b.data
        return y.reshape(*self._shape[:-1], self.w.data.shape[1])

    def backward(self, dy):
        dy2d = np.ascontiguousarray(dy.reshape(-1, dy.shape[-1]))
        self.w.grad += self._x2d.T @ dy2d
        self.b.grad += dy2d.sum(axis=0)
        dx = dy2d @ self.w.data.T
        return dx.reshape(self._shape)

    def params(self):
        return [self.w, self.b]


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        y = np.maximum(x, 0)
        self._mask = y > 0
        return y

    def backward(self, dy):
        return dy * self._mask


class GlobalMaxPool1D(Layer):
    def __init__(self):
        self._idx = None
        self._T = None

    def forward(self, x):
        if x.shape[1] < 1:
            raise ValueError("global max pool requires at least one timestep")
        y, idx = kernels().maxpool_forward(np.ascontiguousarray(x))
        self._idx, self._T = idx, x.shape[1]
        return y

    def backward(self, dy):
        return kernels().maxpool_backward(self._idx, np.ascontiguousarray(dy), self._T)


class LSTM(Layer):
    """LSTM over sequences, optionally bidirectional; zero initial states."""

    def __init__(
        self,
        din,
        units,
        rng,
        return_sequences=True,
        bidirectional=False,
        dtype=np.float32,
        name="lstm",
    ):
        self.units = units
        self.return_sequences = return_sequences
        self.bidirectional = bidirectional
        self._dirs = []
        suffixes = ("fwd", "rev") if bidirectional else ("fwd",)
        for suffix in suffixes:
            w = Param(f"{name}.w_{suffix}", glorot_uniform(rng, (din, 4 * units), din, units, dtype))
            u = Param(f"{name}.u_{suffix}", orthogonal_stacked(rng, units, 4, dtype))
            b_init = np.zeros(4 * units, dtype=dtype)
            b_init[units : 2 * units] = 1.0  # forget-gate bias
            b = Param(f"{name}.b_{suffix}", b_init)
            self._dirs.append({"w": w, "u": u, "b": b})
        self._cache = None

    @property
    def out_dim(self):
        return self.units * (2 if self.bidirectional else 1)

    def _run(self, x, d):
        h, c, gates = kernels().lstm_forward(x, d["w"].data, d["u"].data, d["b"].data)
        return {"x": x, "h": h, "c": c, "gates": gates}

    def forward(self, x):
        x = np.ascontiguousarray(x)
        cache = [self._run(x, self._dirs[0])]
        outs = [cache[0]["h"]]
        if self.bidirectional:
            xr = np.ascontiguousarray(x[:, ::-1, :])
            cache.append(self._run(xr, self._dirs[1]))
            outs.append(np.ascontiguousarray(cache[1]["h"][:, ::-1, :]))
        self._cache = cache
        if self.return_sequences:
            return outs[0] if len(outs) == 1 else np.concatenate(outs, axis=2)
        lasts = [cache[0]["h"][:, -1, :]]
        if self.bidirectional:
            lasts.append(cache[1]["h"][:, -1, :])
        return lasts[0] if len(lasts) == 1 else np.concatenate(lasts, axis=1)

    def backward(self, dy):
        H = self.units
        cache = self._cache
        B, T, _ = cache[0]["x"].shape
        dtype = cache[0]["x"].dtype
        dh_parts = []
        if self.return_sequences:
            dh_parts.append(np.ascontiguousarray(dy[:, :, :H]))
            if self.bidirectional:
                # reverse the upstream gradient back into the reversed time base
                dh_parts.append(np.ascontiguousarray(dy[:, ::-1, H:]))
        else:
            full = np.zeros((B, T, H), dtype=dtype)
            full[:, -1, :] = dy[:, :H]
            dh_parts.append(full)
            if self.bidirectional:
                full_r = np.zeros((B, T, H), dtype=dtype)
                full_r[:, -1, :] = dy[:, H:]
                dh_parts.append(full_r)
        dx_total = None
        for d, cached, dh in zip(self._dirs, cache, dh_parts):
            dx, dw, du, db = kernels().lstm_backward(
                cached["x"], d["w"].data, d["u"].data,
                cached["h"], cached["c"], cached["gates"], dh,
            )
            d["w"].grad += dw
            d["u"].grad += du
            d["b"].grad += db
            if d is self._dirs[0]:
                dx_total = dx
            else:
                dx_total = dx_total + dx[:, ::-1, :]
        return dx_total

    def params(self):
        out = []
        for d in self._dirs:
            out.extend([d["w"], d["u"], d["b"]])
        return out


class ResidualConvBlock(Layer):
    """relu(conv(x)) plus a skip path (identity, or 1x1 projection when widths differ)."""

    def __init__(self, cin, cout, kernel_size, rng, residual=True, dtype=np.float32, name="block"):
        self.conv = Conv1D(cin, cout, kernel_size, rng, dtype=dtype, name=f"{name}.conv")
        self.relu = ReLU()
        self.residual = residual
        self.proj = None
        if residual and cin != cout:
            self.proj = Conv1D(cin, cout, 1, rng, dtype=dtype, name=f"{name}.proj")

    def forward(self, x):
        y = self.relu.forward(self.conv.forward(x))
        if not self.residual:
            return y
        skip = self.proj.forward(x) if self.proj is not None else x
        return y + skip

    def backward(self, dy):
        dx = self.conv.backward(self.relu.backward(dy))
        if self.residual:
            dx = dx + (self.proj.backward(dy) if self.proj is not None else dy)
        return dx

    def params(self):
        out = self.conv.params()
        if self.proj is not None:
            out.extend(self.proj.params())
        return out
