"""Character-level seq2seq LSTM language model and embedding export.

The model predicts, for every position of the input sequence, the character
that sits ``shift`` positions later in the corpus.  Its trained embedding
table is what downstream classifiers consume.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nn
from .checkpoint import Checkpoint
from .nn.layers import Dense, Embedding, LSTM
from .nn.optim import AdamState, adam_step
from .vocab import CharVocab

_BLOCK_START = re.compile(r"^[ \t]*[IC]:", re.MULTILINE)

EMB_MAGIC = b"LTEMB001"


@dataclass
class LmConfig:
    seq_len: int
    shift: int = 1
    embed_dim: int = 64
    lstm_units: int = 1024
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 30
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.shift <= self.seq_len):
            raise ValueError("shift must satisfy 1 <= shift <= seq_len")
        for field_name in ("seq_len", "embed_dim", "lstm_units", "batch_size", "max_epochs"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be positive")

    def to_dict(self) -> dict:
        return {
            "seq_len": self.seq_len,
            "shift": self.shift,
            "embed_dim": self.embed_dim,
            "lstm_units": self.lstm_units,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "l2": self.l2,
            "seed": self.seed,
        }


@dataclass
class SequencePair:
    input_ids: np.ndarray
    target_ids: np.ndarray


def median_block_length(corpus: str) -> int:
    """Median character length of I:/C: message blocks (lower median for even counts).

    A block runs from the start of a line beginning with "I:" or "C:" (after
    optional indentation) up to the next such line or the end of the corpus.
    """
    starts = [m.start() for m in _BLOCK_START.finditer(corpus)]
    if not starts:
        raise ValueError(
            "no I:/C: message blocks found; pass an explicit sequence length instead"
        )
    bounds = starts + [len(corpus)]
    lengths = sorted(bounds[i + 1] - bounds[i] for i in range(len(starts)))
    return int(lengths[(len(lengths) - 1) // 2])


def pair_count(n_ids: int, seq_len: int, shift: int) -> int:
    if n_ids < seq_len + shift:
        raise ValueError(
            f"corpus of {n_ids} ids is too short for seq_len={seq_len}, shift={shift}"
        )
    return (n_ids - seq_len - shift) // shift + 1


def sequence_pair_arrays(corpus_ids: np.ndarray, seq_len: int, shift: int):
    """Zero-copy (inputs, targets) windows over the encoded corpus."""
    corpus_ids = np.ascontiguousarray(corpus_ids)
    n = pair_count(len(corpus_ids), seq_len, shift)
    windows = sliding_window_view(corpus_ids, seq_len)
    si = windows[0 : n * shift : shift]
    st = windows[shift : shift + n * shift : shift]
    return si, st


def make_sequence_pairs(corpus_ids, seq_len: int, shift: int):
    """Stream of (input, target) pairs; targets are inputs shifted by `shift`."""
    si, st = sequence_pair_arrays(np.asarray(corpus_ids, dtype=np.int32), seq_len, shift)
    for a, b in zip(si, st):
        yield SequencePair(input_ids=a.copy(), target_ids=b.copy())


def lm_param_count(vocab_size: int, embed_dim: int = 64, lstm_units: int = 1024) -> int:
    """Closed-form parameter count: V*E + 4*((E+H)*H + H) + (H*V + V)."""
    v, e, h = vocab_size, embed_dim, lstm_units
    return v * e + 4 * ((e + h) * h + h) + (h * v + v)


class CharLm:
    """embedding -> LSTM (return sequences) -> shared dense over every timestep."""

    def __init__(self, vocab_size: int, cfg: LmConfig, rng, dtype=np.float32,
                 init_embeddings=None):
        self.vocab_size = vocab_size
        self.cfg = cfg
        self.embedding = Embedding(vocab_size, cfg.embed_dim, rng, dtype=dtype,
                                   init_table=init_embeddings, name="embedding")
        self.lstm = LSTM(cfg.embed_dim, cfg.lstm_units, rng, return_sequences=True,
                         dtype=dtype, name="lstm")
        self.out = Dense(cfg.lstm_units, vocab_size, rng, dtype=dtype, l2=True, name="out")

    def params(self):
        return self.embedding.params() + self.lstm.params() + self.out.params()

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params())

    def forward_logits(self, ids: np.ndarray) -> np.ndarray:
        x = self.embedding.forward(ids)
        h = self.lstm.forward(x)
        return self.out.forward(h)

    def loss_and_backward(self, si: np.ndarray, st: np.ndarray) -> float:
        logits = self.forward_logits(si)
        b, t, v = logits.shape
        loss, grad = nn.softmax_cross_entropy(logits.reshape(b * t, v), st.reshape(b * t))
        self.zero_grad()
        dh = self.out.backward(grad.reshape(b, t, v))
        dx = self.lstm.backward(dh)
        self.embedding.backward(dx)
        return loss

    def next_char_probs(self, ids: np.ndarray) -> np.ndarray:
        """Per-position next-character distribution for one encoded sequence."""
        logits = self.forward_logits(np.asarray(ids, dtype=np.int32)[None, :])
        return nn.softmax(logits[0])

    def to_checkpoint(self, vocab: CharVocab, metrics: dict | None = None) -> Checkpoint:
        return Checkpoint(
            kind="lm",
            config=self.cfg.to_dict(),
            vocab=vocab,
            params={p.name: p.data.copy() for p in self.params()},
            metrics=metrics,
        )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "CharLm":
        if ckpt.kind != "lm":
            raise ValueError(f"expected an lm checkpoint, got kind={ckpt.kind!r}")
        cfg = LmConfig(**ckpt.config)
        model = cls(ckpt.vocab.size, cfg, np.random.default_rng(0))
        for p in model.params():
            if p.name not in ckpt.params:
                raise ValueError(f"checkpoint missing parameter {p.name!r}")
            stored = ckpt.params[p.name]
            if stored.shape != p.data.shape:
                raise ValueError(
                    f"parameter {p.name!r} has shape {stored.shape}, expected {p.data.shape}"
                )
            p.data = stored.astype(p.data.dtype)
            p.grad = np.zeros_like(p.data)
        return model


def lm_train(pairs, vocab: CharVocab, cfg: LmConfig, dtype=np.float32):
    """Train the LM on (input, target) pairs; returns (Checkpoint, history, model).

    Early-stops on the training loss (no validation split is used for the LM)
    and keeps the best-loss epoch's weights.
    """
    if isinstance(pairs, tuple):
        si, st = pairs
    else:
        materialized = list(pairs)
        if not materialized:
            raise ValueError("no training pairs")
        si = np.stack([p.input_ids for p in materialized])
        st = np.stack([p.target_ids for p in materialized])
    si = np.ascontiguousarray(si, dtype=np.int32)
    st = np.ascontiguousarray(st, dtype=np.int32)

    seed_seq = np.random.SeedSequence(cfg.seed)
    init_rng, shuffle_rng = (np.random.default_rng(s) for s in seed_seq.spawn(2))
    model = CharLm(vocab.size, cfg, init_rng, dtype=dtype)
    state = AdamState.for_params(model.params())

    n = len(si)
    history = {"loss": []}
    best_loss = np.inf
    best_params = None
    bad_epochs = 0
    for _epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            loss = model.loss_and_backward(si[batch], st[batch])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"LM training diverged (loss={loss}) at epoch {_epoch}; "
                    "lower the learning rate"
                )
            adam_step(model.params(), state, cfg.lr, cfg.l2)
            total += loss * len(batch)
        epoch_loss = total / n
        history["loss"].append(epoch_loss)
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_params = [p.data.copy() for p in model.params()]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break
    if best_params is not None:
        for p, data in zip(model.params(), best_params):
            p.data = data
    ckpt = model.to_checkpoint(vocab, metrics={"train_loss": best_loss})
    return ckpt, history, model


def extract_char_embeddings(ckpt: Checkpoint) -> np.ndarray:
    """Copy of the trained embedding table, shape (vocab size, embed dim)."""
    if ckpt.kind != "lm":
        raise ValueError(f"expected an lm checkpoint, got kind={ckpt.kind!r}")
    table = ckpt.params.get("embedding")
    if table is None:
        raise ValueError("checkpoint has no embedding table")
    expected = (ckpt.vocab.size, ckpt.config["embed_dim"])
    if table.shape != expected:
        raise ValueError(f"embedding table has shape {table.shape}, expected {expected}")
    return table.copy()


def write_embedding_file(path: str | Path, table: np.ndarray, vocab: CharVocab) -> None:
    """header (V, E, vocab hash) + row-major float32 little-endian rows."""
    v, e = table.shape
    if v != vocab.size:
        raise ValueError(f"table rows {v} != vocab size {vocab.size}")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", v, e))
        fh.write(vocab.hash().encode("ascii"))
        fh.write(np.ascontiguousarray(table, dtype="<f4").tobytes())


def read_embedding_file(path: str | Path):
    """Returns (table float32 (V,E), vocab_hash)."""
    with open(path, "rb") as fh:
        if fh.read(8) != EMB_MAGIC:
            raise ValueError(f"{path} is not an embedding export file")
        v, e = struct.unpack("<II", fh.read(8))
        vocab_hash = fh.read(64).decode("ascii")
        table = np.frombuffer(fh.read(v * e * 4), dtype="<f4").reshape(v, e)
    return table.astype(np.float32), vocab_hash
