"""Minimal dense-tensor NN kernel: layers, losses, Adam; numba or numpy backend."""

from .backend import backend_name, kernels, numba_available, set_backend
from .layers import (
    Conv1D,
    Dense,
    Embedding,
    GlobalMaxPool1D,
    Layer,
    LSTM,
    Param,
    ResidualConvBlock,
    ReLU,
)
from .ops import (
    LstmParams,
    conv1d,
    dense,
    embedding_lookup,
    global_max_pool1d,
    lstm_forward,
    softmax,
    softmax_cross_entropy,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "Conv1D",
    "Dense",
    "Embedding",
    "GlobalMaxPool1D",
    "LSTM",
    "Layer",
    "LstmParams",
    "Param",
    "ReLU",
    "ResidualConvBlock",
    "adam_step",
    "backend_name",
    "conv1d",
    "dense",
    "embedding_lookup",
    "global_max_pool1d",
    "kernels",
    "lstm_forward",
    "numba_available",
    "set_backend",
    "softmax",
    "softmax_cross_entropy",
]
