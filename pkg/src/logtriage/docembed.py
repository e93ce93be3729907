"""Fixed-size embeddings of long token sequences via overlapping windows.

Chunks of ``context`` tokens slide over the document with stride
``context - overlap``; each chunk is mean-pooled over its token embeddings
(mask-aware by default, so right-padding in the final chunk is ignored) and
the document embedding is the unweighted mean over chunk means.  Token
embeddings come from a pluggable provider (deterministic mock, or an HTTP
service speaking a small JSON protocol).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .classifier import class_weights
from .nn.layers import Dense
from .nn.optim import AdamState, adam_step
from . import nn

CACHE_ENV_VAR = "LOGTRIAGE_CACHE_DIR"

STORE_MAGIC = b"LTDOCEMB"


@dataclass
class ChunkPlan:
    doc_len: int
    context: int
    overlap: int
    starts: list[int]

    @property
    def m(self) -> int:
        return len(self.starts)


def plan_chunks(doc_len: int, context: int, overlap: int) -> ChunkPlan:
    """Chunk starts covering [0, doc_len); the final chunk is right-padded.

    When (doc_len - overlap) divides evenly by (context - overlap) the chunk
    count matches (doc_len - overlap) / (context - overlap) exactly;
    otherwise it is the ceiling (minimal count that still covers the text).
    """
    if doc_len < 1:
        raise ValueError("doc_len must be >= 1")
    if not 0 <= overlap < context:
        raise ValueError(f"overlap must satisfy 0 <= overlap < context, got {overlap} >= {context}")
    if doc_len <= context:
        return ChunkPlan(doc_len, context, overlap, [0])
    step = context - overlap
    m = -(-(doc_len - overlap) // step)  # ceil division
    return ChunkPlan(doc_len, context, overlap, [i * step for i in range(m)])


def chunk_arrays(plan: ChunkPlan, tokens: np.ndarray, pad_id: int = 0):
    """Yield (chunk_ids, mask) pairs of length plan.context per chunk."""
    tokens = np.asarray(tokens, dtype=np.int64)
    for start in plan.starts:
        ids = np.full(plan.context, pad_id, dtype=np.int64)
        mask = np.zeros(plan.context, dtype=np.int64)
        piece = tokens[start : start + plan.context]
        ids[: len(piece)] = piece
        mask[: len(piece)] = 1
        yield ids, mask


@dataclass
class DocumentEmbedding:
    vector: np.ndarray
    provider_id: str
    doc_len: int
    context: int
    overlap: int
    m: int


class MockProvider:
    """Deterministic stand-in for an external embedding model.

    Each token id hashes to a fixed vector in [-1, 1]^dim, independent of
    position and surrounding context.
    """

    def __init__(self, dim: int, seed: int = 0, context_capacity: int = 1 << 30):
        self.dim = dim
        self.seed = seed
        self.context_capacity = context_capacity
        self.provider_id = f"mock-d{dim}-s{seed}"
        self._rows: dict[int, np.ndarray] = {}

    def _row(self, token_id: int) -> np.ndarray:
        row = self._rows.get(token_id)
        if row is None:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=self.seed, spawn_key=(int(token_id),))
            )
            row = rng.uniform(-1.0, 1.0, size=self.dim)
            self._rows[token_id] = row
        return row

    def embed_chunk(self, tokens, mask) -> np.ndarray:
        out = np.empty((len(tokens), self.dim), dtype=np.float64)
        for i, tok in enumerate(tokens):
            out[i] = self._row(int(tok))
        return out


def mock_provider(dim: int, seed: int = 0) -> MockProvider:
    return MockProvider(dim=dim, seed=seed)


class HttpProvider:
    """Client for an embeddings endpoint speaking the JSON wire protocol.

    POST {"tokens": [int], "mask": [0|1]} and expect
    {"embeddings": [[float; dim]]}.  Failed requests retry with exponential
    backoff; successful responses are cached on disk keyed by request hash.
    """

    def __init__(
        self,
        endpoint_url: str,
        auth_token: str | None = None,
        timeout: float = 10.0,
        max_attempts: int = 3,
        backoff: float = 0.25,
        cache_dir: str | Path | None = None,
        context_capacity: int = 1 << 30,
    ):
        self.endpoint_url = endpoint_url
        self.auth_token = auth_token
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.context_capacity = context_capacity
        self.provider_id = f"http:{endpoint_url}"
        cache = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV_VAR)
        self.cache_dir = Path(cache) if cache else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._session = requests.Session()

    def _cache_path(self, payload: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256((self.endpoint_url + "\n" + payload).encode()).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def embed_chunk(self, tokens, mask) -> np.ndarray:
        payload = json.dumps(
            {"tokens": [int(t) for t in tokens], "mask": [int(m) for m in mask]},
            separators=(",", ":"),
        )
        cache_path = self._cache_path(payload)
        if cache_path is not None and cache_path.exists():
            body = json.loads(cache_path.read_text(encoding="utf-8"))
            return self._parse(body, len(tokens))
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_error = None
        for attempt in range(self.max_attempts):
            try:
                resp = self._session.post(
                    self.endpoint_url, data=payload, headers=headers, timeout=self.timeout
                )
                if resp.status_code >= 500:
                    raise requests.HTTPError(f"server returned {resp.status_code}")
                resp.raise_for_status()
                body = resp.json()
                out = self._parse(body, len(tokens))
                if cache_path is not None:
                    cache_path.write_text(resp.text, encoding="utf-8")
                return out
            except (requests.RequestException, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff * (2**attempt))
        raise RuntimeError(
            f"embedding request failed after {self.max_attempts} attempts: {last_error}"
        )

    @staticmethod
    def _parse(body: dict, expected_len: int) -> np.ndarray:
        emb = np.asarray(body.get("embeddings"), dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != expected_len:
            raise ValueError(
                f"provider returned embeddings of shape {emb.shape}, "
                f"expected ({expected_len}, dim)"
            )
        return emb


def http_provider(endpoint_url: str, auth_token: str | None = None, timeout: float = 10.0,
                  **kwargs) -> HttpProvider:
    return HttpProvider(endpoint_url, auth_token=auth_token, timeout=timeout, **kwargs)


def embed_document(
    tokens,
    provider,
    context: int,
    overlap: int,
    mask_aware: bool = True,
    pad_id: int = 0,
    max_workers: int = 1,
) -> DocumentEmbedding:
    """Document embedding = mean over chunk means of per-token embeddings.

    mask_aware=True divides each chunk by its real-token count (pad positions
    are excluded); mask_aware=False applies the literal 1/context divisor and
    includes pad-token embeddings.  Both agree exactly when nothing is padded.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if getattr(provider, "context_capacity", 1 << 30) < context:
        raise ValueError(
            f"provider context capacity {provider.context_capacity} < requested {context}"
        )
    plan = plan_chunks(len(tokens), context, overlap)
    chunks = list(chunk_arrays(plan, tokens, pad_id=pad_id))

    def one(indexed):
        k, (ids, mask) = indexed
        try:
            emb = np.asarray(provider.embed_chunk(ids, mask), dtype=np.float64)
        except Exception as exc:
            raise RuntimeError(f"provider failed on chunk {k}: {exc}") from exc
        if emb.ndim != 2 or emb.shape[0] != plan.context:
            raise RuntimeError(f"provider returned bad shape {emb.shape} on chunk {k}")
        if mask_aware:
            real = mask.astype(bool)
            return emb[real].sum(axis=0) / real.sum()
        return emb.sum(axis=0) / plan.context

    indexed = list(enumerate(chunks))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            chunk_means = list(pool.map(one, indexed))
    else:
        chunk_means = [one(item) for item in indexed]
    vector = np.mean(np.stack(chunk_means, axis=0), axis=0)
    return DocumentEmbedding(
        vector=vector,
        provider_id=getattr(provider, "provider_id", "unknown"),
        doc_len=plan.doc_len,
        context=plan.context,
        overlap=plan.overlap,
        m=plan.m,
    )


class EmbeddingClassifier:
    """Softmax head over document embeddings, trained with class weights."""

    def __init__(self, dim: int, n_classes: int = 4, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.dense = Dense(dim, n_classes, rng, dtype=np.float64, l2=True, name="emb_head")
        self.n_classes = n_classes

    def fit(self, embeddings, labels, epochs: int = 300, lr: float = 0.05, l2: float = 0.0):
        x = np.asarray(embeddings, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[1] != self.dense.w.data.shape[0]:
            raise ValueError(
                f"embeddings must be (n, {self.dense.w.data.shape[0]}), got {x.shape}"
            )
        counts = np.bincount(y, minlength=self.n_classes)
        wts = class_weights(counts)
        state = AdamState.for_params(self.dense.params())
        history = []
        for _ in range(epochs):
            logits = self.dense.forward(x)
            loss, grad = nn.softmax_cross_entropy(logits, y, wts)
            self.dense.zero_grad()
            self.dense.backward(grad)
            adam_step(self.dense.params(), state, lr, l2)
            history.append(loss)
        return history

    def predict_proba(self, embeddings) -> np.ndarray:
        x = np.asarray(embeddings, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dense.w.data.shape[0]:
            raise ValueError(
                f"embeddings must be (n, {self.dense.w.data.shape[0]}), got {x.shape}"
            )
        return nn.softmax(self.dense.forward(x))

    def predict(self, embeddings) -> np.ndarray:
        return self.predict_proba(embeddings).argmax(axis=1)


def embed_classifier(train_embeddings, labels, n_classes: int = 4, seed: int = 0,
                     epochs: int = 300, lr: float = 0.05) -> EmbeddingClassifier:
    clf = EmbeddingClassifier(np.asarray(train_embeddings).shape[1], n_classes, seed=seed)
    clf.fit(train_embeddings, labels, epochs=epochs, lr=lr)
    return clf


def save_embedding_store(path: str | Path, record_ids: list[str], vectors: np.ndarray,
                         provider_id: str) -> None:
    """header (dim, provider id) + per-record id and float32 LE row."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or len(record_ids) != vectors.shape[0]:
        raise ValueError("need one vector per record id")
    pid = provider_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<IHI", vectors.shape[1], len(pid), vectors.shape[0]))
        fh.write(pid)
        for rid, vec in zip(record_ids, vectors):
            rid_b = rid.encode("utf-8")
            fh.write(struct.pack("<H", len(rid_b)))
            fh.write(rid_b)
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def load_embedding_store(path: str | Path):
    """Returns (record_ids, vectors float32 (n, dim), provider_id)."""
    with open(path, "rb") as fh:
        if fh.read(8) != STORE_MAGIC:
            raise ValueError(f"{path} is not an embedding store")
        dim, pid_len, n = struct.unpack("<IHI", fh.read(10))
        provider_id = fh.read(pid_len).decode("utf-8")
        ids = []
        vectors = np.empty((n, dim), dtype=np.float32)
        for i in range(n):
            (id_len,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(id_len).decode("utf-8"))
            vectors[i] = np.frombuffer(fh.read(dim * 4), dtype="<f4")
    return ids, vectors, provider_id
