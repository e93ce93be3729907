"""Analytic backward passes vs central finite differences (64-bit)."""

import numpy as np
import pytest

from logtriage import nn
from logtriage.nn.layers import (
    Conv1D,
    Dense,
    Embedding,
    GlobalMaxPool1D,
    LSTM,
    ReLU,
    ResidualConvBlock,
)

from gradcheck_util import check_layer_gradients, numeric_grad, rel_error

TOL = 1e-4


def test_conv1d_gradients(nn_backend, rng):
    for _ in range(3):
        layer = Conv1D(3, 4, 5, rng, dtype=np.float64)
        x = rng.standard_normal((2, 9, 3))
        assert check_layer_gradients(layer, x, rng) < TOL


def test_dense_gradients(nn_backend, rng):
    for _ in range(3):
        layer = Dense(4, 3, rng, dtype=np.float64)
        x = rng.standard_normal((5, 4))
        assert check_layer_gradients(layer, x, rng) < TOL


def test_dense_gradients_batched_time(nn_backend, rng):
    layer = Dense(3, 2, rng, dtype=np.float64)
    x = rng.standard_normal((2, 6, 3))
    assert check_layer_gradients(layer, x, rng) < TOL


def test_embedding_gradients(nn_backend, rng):
    layer = Embedding(6, 4, rng, dtype=np.float64)
    ids = rng.integers(0, 6, size=(2, 7)).astype(np.int32)
    out = layer.forward(ids)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float((layer.forward(ids) * proj).sum())

    layer.zero_grad()
    layer.forward(ids)
    layer.backward(proj)
    assert rel_error(layer.table.grad, numeric_grad(loss, layer.table.data)) < TOL


def test_relu_gradients(nn_backend, rng):
    layer = ReLU()
    x = rng.standard_normal((3, 8)) + 0.1  # keep clear of the kink
    assert check_layer_gradients(layer, x, rng) < TOL


def test_maxpool_gradients(nn_backend, rng):
    layer = GlobalMaxPool1D()
    x = rng.standard_normal((2, 7, 4))
    assert check_layer_gradients(layer, x, rng) < TOL


def test_lstm_gradients(nn_backend, rng):
    layer = LSTM(3, 4, rng, return_sequences=True, dtype=np.float64)
    x = rng.standard_normal((2, 5, 3))
    assert check_layer_gradients(layer, x, rng) < TOL


def test_lstm_last_state_gradients(nn_backend, rng):
    layer = LSTM(3, 4, rng, return_sequences=False, dtype=np.float64)
    x = rng.standard_normal((2, 5, 3))
    assert check_layer_gradients(layer, x, rng) < TOL


def test_bidirectional_lstm_gradients(nn_backend, rng):
    layer = LSTM(3, 3, rng, return_sequences=True, bidirectional=True, dtype=np.float64)
    x = rng.standard_normal((2, 4, 3))
    assert check_layer_gradients(layer, x, rng) < TOL


def test_residual_block_gradients(nn_backend, rng):
    layer = ResidualConvBlock(3, 5, 3, rng, residual=True, dtype=np.float64)
    x = rng.standard_normal((2, 6, 3))
    assert check_layer_gradients(layer, x, rng) < TOL


def test_residual_block_identity_with_zero_kernels(nn_backend, rng):
    layer = ResidualConvBlock(4, 4, 3, rng, residual=True, dtype=np.float64)
    layer.conv.w.data[...] = 0.0
    layer.conv.b.data[...] = 0.0
    x = rng.standard_normal((2, 6, 4))
    np.testing.assert_allclose(layer.forward(x), x)


def test_weighted_softmax_ce_gradients(nn_backend, rng):
    logits = rng.standard_normal((6, 4))
    y = rng.integers(0, 4, size=6)
    wts = rng.uniform(0.5, 3.0, size=4)
    _, grad = nn.softmax_cross_entropy(logits, y, wts)

    def loss():
        l, _ = nn.softmax_cross_entropy(logits, y, wts)
        return l

    assert rel_error(grad, numeric_grad(loss, logits)) < TOL
