"""Residual 1D-CNN log classifier: model assembly, training loop and metrics."""

from __future__ import annotations

import copy
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .checkpoint import Checkpoint
from .corpus import CLASSES, LogRecord
from .nn.layers import Dense, Embedding, GlobalMaxPool1D, LSTM, ReLU, ResidualConvBlock
from .nn.optim import AdamState, adam_step
from .vocab import CharVocab, encode


@dataclass
class ArchConfig:
    """Classifier architecture; the default stack keeps the parameter count near 0.8M."""

    max_len: int = 50_000
    embed_dim: int = 64
    conv_layers: list[tuple[int, int]] = field(default_factory=lambda: [(128, 7)] * 3)
    residual: bool = True
    dense_units: list[int] = field(default_factory=lambda: [512, 512])
    n_classes: int = 4
    bilstm_front: bool = False
    bilstm_units: int = 64

    def __post_init__(self):
        self.conv_layers = [tuple(layer) for layer in self.conv_layers]
        if not 1 <= len(self.conv_layers) <= 4:
            raise ValueError("conv layer count must be within the tested range 1..4")
        for filters, kernel in self.conv_layers:
            if filters < 1:
                raise ValueError("conv filter counts must be positive")
            if kernel % 2 == 0:
                raise ValueError(f"kernel sizes must be odd, got {kernel}")
        if self.max_len < 1 or self.embed_dim < 1 or self.n_classes < 2:
            raise ValueError("invalid architecture dimensions")

    def to_dict(self) -> dict:
        return {
            "max_len": self.max_len,
            "embed_dim": self.embed_dim,
            "conv_layers": [list(layer) for layer in self.conv_layers],
            "residual": self.residual,
            "dense_units": list(self.dense_units),
            "n_classes": self.n_classes,
            "bilstm_front": self.bilstm_front,
            "bilstm_units": self.bilstm_units,
        }


@dataclass
class TrainConfig:
    lr: float = 1e-4
    max_epochs: int = 200
    early_stop_patience: int = 30
    batch_size: int = 32
    l2: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.1
    target_train_accuracy: float | None = None

    def __post_init__(self):
        if self.early_stop_patience >= self.max_epochs:
            raise ValueError("early_stop_patience must be < max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class Metrics:
    confusion: np.ndarray  # rows = true class, cols = predicted
    per_class: dict
    accuracy: float
    f1_macro: float
    f1_micro: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "confusion": self.confusion.tolist(),
                "per_class": self.per_class,
                "accuracy": self.accuracy,
                "f1_macro": self.f1_macro,
                "f1_micro": self.f1_micro,
            },
            indent=2,
        )

    def confusion_csv(self, class_names=CLASSES) -> str:
        buf = io.StringIO()
        names = list(class_names)[: self.confusion.shape[0]]
        buf.write("true\\pred," + ",".join(names) + "\n")
        for i, name in enumerate(names):
            buf.write(name + "," + ",".join(str(int(v)) for v in self.confusion[i]) + "\n")
        return buf.getvalue()


@dataclass
class EncodedDataset:
    """Encoded, fixed-length sequences with integer labels."""

    ids: np.ndarray  # (N, max_len) int32
    labels: np.ndarray  # (N,) int64
    record_ids: list[str]

    def __len__(self):
        return len(self.labels)

    def subset(self, indices) -> "EncodedDataset":
        indices = np.asarray(indices)
        return EncodedDataset(
            ids=self.ids[indices],
            labels=self.labels[indices],
            record_ids=[self.record_ids[i] for i in indices],
        )


def encode_dataset(records: list[LogRecord], vocab: CharVocab, max_len: int) -> EncodedDataset:
    labeled = [r for r in records if r.label is not None]
    if not labeled:
        raise ValueError("no labeled records to encode")
    ids = np.empty((len(labeled), max_len), dtype=np.int32)
    labels = np.empty(len(labeled), dtype=np.int64)
    for i, rec in enumerate(labeled):
        ids[i] = encode(rec.text, vocab, max_len)
        labels[i] = CLASSES.index(rec.label)
    return EncodedDataset(ids=ids, labels=labels, record_ids=[r.id for r in labeled])


def stratified_split(labels: np.ndarray, fraction: float, seed: int):
    """Split indices into (rest, held_out) keeping per-class proportions."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    held = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        take = int(round(len(members) * fraction))
        held.extend(members[:take])
    held = np.sort(np.array(held, dtype=np.int64))
    rest = np.setdiff1d(np.arange(len(labels)), held)
    return rest, held


class SequenceClassifier:
    """embedding -> [optional BiLSTM] -> residual conv blocks -> global max pool -> dense head."""

    def __init__(self, arch: ArchConfig, vocab: CharVocab, rng, init_embeddings=None,
                 dtype=np.float32):
        self.arch = arch
        self.vocab = vocab
        self.dtype = dtype
        self.embedding = Embedding(vocab.size, arch.embed_dim, rng, dtype=dtype,
                                   init_table=init_embeddings, name="embedding")
        width = arch.embed_dim
        self.bilstm = None
        if arch.bilstm_front:
            self.bilstm = LSTM(width, arch.bilstm_units, rng, return_sequences=True,
                               bidirectional=True, dtype=dtype, name="bilstm")
            width = self.bilstm.out_dim
        self.blocks = []
        for i, (filters, kernel) in enumerate(arch.conv_layers):
            self.blocks.append(
                ResidualConvBlock(width, filters, kernel, rng, residual=arch.residual,
                                  dtype=dtype, name=f"block{i}")
            )
            width = filters
        self.pool = GlobalMaxPool1D()
        self.head = []
        for i, units in enumerate(arch.dense_units):
            self.head.append(Dense(width, units, rng, dtype=dtype, l2=True, name=f"dense{i}"))
            self.head.append(ReLU())
            width = units
        self.out = Dense(width, arch.n_classes, rng, dtype=dtype, l2=True, name="out")

    def _layers(self):
        layers = [self.embedding]
        if self.bilstm is not None:
            layers.append(self.bilstm)
        layers.extend(self.blocks)
        layers.append(self.pool)
        layers.extend(self.head)
        layers.append(self.out)
        return layers

    def params(self):
        out = []
        for layer in self._layers():
            out.extend(layer.params())
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params())

    def forward_logits(self, ids: np.ndarray) -> np.ndarray:
        x = ids
        for layer in self._layers():
            x = layer.forward(x)
        return x

    def backward_from_logits(self, dlogits: np.ndarray) -> None:
        grad = dlogits
        for layer in reversed(self._layers()):
            grad = layer.backward(grad)

    def predict_proba(self, ids: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Forward-only class probabilities for (N, T) encoded sequences."""
        outs = []
        for lo in range(0, len(ids), batch_size):
            logits = self.forward_logits(ids[lo : lo + batch_size])
            outs.append(nn.softmax(logits))
        return np.concatenate(outs, axis=0)

    def to_checkpoint(self, metrics: dict | None = None) -> Checkpoint:
        return Checkpoint(
            kind="classifier",
            config=self.arch.to_dict(),
            vocab=self.vocab,
            params={p.name: p.data.copy() for p in self.params()},
            metrics=metrics,
        )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "SequenceClassifier":
        if ckpt.kind != "classifier":
            raise ValueError(f"expected a classifier checkpoint, got kind={ckpt.kind!r}")
        arch = ArchConfig(**ckpt.config)
        model = cls(arch, ckpt.vocab, np.random.default_rng(0))
        for p in model.params():
            if p.name not in ckpt.params:
                raise ValueError(f"checkpoint missing parameter {p.name!r}")
            stored = ckpt.params[p.name]
            if stored.shape != p.data.shape:
                raise ValueError(
                    f"parameter {p.name!r} has shape {stored.shape}, expected {p.data.shape}"
                )
            p.data = stored.astype(model.dtype)
            p.grad = np.zeros_like(p.data)
        return model


def build_model(arch: ArchConfig, vocab: CharVocab, init_embeddings=None, seed: int = 0,
                dtype=np.float32) -> SequenceClassifier:
    """Assemble the classifier; init_embeddings rows are copied verbatim when given."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return SequenceClassifier(arch, vocab, rng, init_embeddings=init_embeddings, dtype=dtype)


def class_weights(label_counts) -> np.ndarray:
    """weight_c = N_total / (n_classes * count_c); all classes must be present.

    Accepts a mapping from class name to count, or a sequence of counts
    ordered by class index.
    """
    if isinstance(label_counts, dict):
        missing = [name for name in CLASSES if label_counts.get(name, 0) <= 0]
        if missing:
            raise ValueError(
                f"classes {missing} have no samples; merge rare classes or resample"
            )
        counts = np.array([label_counts[name] for name in CLASSES], dtype=np.float64)
    else:
        counts = np.asarray(label_counts, dtype=np.float64)
        if np.any(counts <= 0):
            raise ValueError(
                "every class needs at least one sample; merge rare classes or resample"
            )
    total = counts.sum()
    return (total / (len(counts) * counts)).astype(np.float64)


def _epoch_metrics(loss_sum, n, correct):
    acc = correct / n
    # single-label multiclass: micro-F1 over pooled TP/FP/FN equals accuracy
    return {"loss": loss_sum / n, "accuracy": acc, "f1_micro": acc}


def _weighted_eval(model, dataset: EncodedDataset, wts, batch_size):
    loss_sum = 0.0
    correct = 0
    preds = np.empty(len(dataset), dtype=np.int64)
    for lo in range(0, len(dataset), batch_size):
        ids = dataset.ids[lo : lo + batch_size]
        y = dataset.labels[lo : lo + batch_size]
        logits = model.forward_logits(ids)
        loss, _ = nn.softmax_cross_entropy(logits, y, wts)
        loss_sum += loss * len(y)
        batch_pred = logits.argmax(axis=1)
        preds[lo : lo + len(y)] = batch_pred
        correct += int((batch_pred == y).sum())
    return loss_sum, correct, preds


def train(model: SequenceClassifier, train_set: EncodedDataset, val_set: EncodedDataset,
          cfg: TrainConfig):
    """Class-weighted Adam training with early stopping on validation loss.

    Returns (Checkpoint of the best-validation-loss epoch, history dict with
    per-epoch train/val loss, accuracy and micro-F1).
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    counts = np.bincount(train_set.labels, minlength=model.arch.n_classes)
    wts = class_weights(counts).astype(model.dtype)

    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    state = AdamState.for_params(model.params())
    history = {key: [] for key in (
        "train_loss", "train_accuracy", "train_f1_micro",
        "val_loss", "val_accuracy", "val_f1_micro",
    )}
    best_val = np.inf
    best_params = None
    bad_epochs = 0
    n = len(train_set)
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            ids = train_set.ids[batch]
            y = train_set.labels[batch]
            logits = model.forward_logits(ids)
            loss, grad = nn.softmax_cross_entropy(logits, y, wts)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged (loss={loss}) at epoch {epoch}")
            model.zero_grad()
            model.backward_from_logits(grad)
            adam_step(model.params(), state, cfg.lr, cfg.l2)
            loss_sum += loss * len(y)
            correct += int((logits.argmax(axis=1) == y).sum())
        tm = _epoch_metrics(loss_sum, n, correct)
        history["train_loss"].append(tm["loss"])
        history["train_accuracy"].append(tm["accuracy"])
        history["train_f1_micro"].append(tm["f1_micro"])

        val_loss_sum, val_correct, _ = _weighted_eval(model, val_set, wts, cfg.batch_size)
        vm = _epoch_metrics(val_loss_sum, len(val_set), val_correct)
        history["val_loss"].append(vm["loss"])
        history["val_accuracy"].append(vm["accuracy"])
        history["val_f1_micro"].append(vm["f1_micro"])

        if vm["loss"] < best_val:
            best_val = vm["loss"]
            best_params = [p.data.copy() for p in model.params()]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.early_stop_patience:
                break
        if (cfg.target_train_accuracy is not None
                and tm["accuracy"] >= cfg.target_train_accuracy):
            break
    if best_params is not None:
        for p, data in zip(model.params(), best_params):
            p.data = data.copy()
    ckpt = model.to_checkpoint(metrics={
        "best_val_loss": float(best_val),
        "epochs_run": len(history["train_loss"]),
    })
    return ckpt, history


def predict(model: SequenceClassifier, record: LogRecord | str, vocab: CharVocab | None = None):
    """Classify one (preprocessed) log; returns (class name, probabilities)."""
    vocab = vocab if vocab is not None else model.vocab
    text = record.text if isinstance(record, LogRecord) else record
    ids = encode(text, vocab, model.arch.max_len)[None, :]
    probs = model.predict_proba(ids)[0]
    return CLASSES[int(probs.argmax())], probs


def metrics_from_predictions(y_true, y_pred, n_classes: int = len(CLASSES)) -> Metrics:
    """Confusion matrix plus per-class and aggregate precision/recall/F1."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise ValueError("cannot compute metrics on an empty set")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    per_class = {}
    f1s = []
    for c in range(n_classes):
        tp = conf[c, c]
        fp = conf[:, c].sum() - tp
        fn = conf[c, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        name = CLASSES[c] if c < len(CLASSES) else str(c)
        per_class[name] = {
            "precision": float(precision),
            "recall": float(recall),
            "f1": float(f1),
        }
        f1s.append(f1)
    total = conf.sum()
    tp_all = np.trace(conf)
    accuracy = tp_all / total
    # micro: pool TP/FP/FN across classes
    fp_all = total - tp_all
    fn_all = total - tp_all
    micro_p = tp_all / (tp_all + fp_all) if tp_all + fp_all > 0 else 0.0
    micro_r = tp_all / (tp_all + fn_all) if tp_all + fn_all > 0 else 0.0
    f1_micro = (2 * micro_p * micro_r / (micro_p + micro_r)
                if micro_p + micro_r > 0 else 0.0)
    return Metrics(
        confusion=conf,
        per_class=per_class,
        accuracy=float(accuracy),
        f1_macro=float(np.mean(f1s)),
        f1_micro=float(f1_micro),
    )


def evaluate(model: SequenceClassifier, test_set: EncodedDataset,
             batch_size: int = 64) -> Metrics:
    if len(test_set) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    probs = model.predict_proba(test_set.ids, batch_size=batch_size)
    return metrics_from_predictions(test_set.labels, probs.argmax(axis=1),
                                    model.arch.n_classes)
