"""Versioned binary checkpoint container.

Layout: 8-byte magic, u64 header length, UTF-8 JSON header, then the raw
parameter blobs (row-major 32-bit little-endian floats) concatenated in
header-manifest order.  The header carries the model kind, its config, the
vocabulary (characters in id order), a vocabulary hash and an optional
metric snapshot.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vocab import CharVocab

MAGIC = b"LTCKPT01"


@dataclass
class Checkpoint:
    kind: str
    config: dict
    vocab: CharVocab
    params: dict[str, np.ndarray]
    metrics: dict | None = None

    def save(self, path: str | Path) -> None:
        manifest = []
        blobs = []
        offset = 0
        for name, arr in self.params.items():
            blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            manifest.append(
                {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)}
            )
            blobs.append(blob)
            offset += len(blob)
        header = {
            "kind": self.kind,
            "config": self.config,
            "vocab": list(self.vocab.id_to_char),
            "vocab_hash": self.vocab.hash(),
            "metrics": self.metrics,
            "params": manifest,
        }
        payload = json.dumps(header, ensure_ascii=False).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            for blob in blobs:
                fh.write(blob)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != MAGIC:
                raise ValueError(f"{path} is not a logtriage checkpoint (bad magic {magic!r})")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            body = fh.read()
        params = {}
        for entry in header["params"]:
            raw = body[entry["offset"] : entry["offset"] + entry["nbytes"]]
            arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
            params[entry["name"]] = arr.astype(np.float32)
        vocab = CharVocab.from_chars(header["vocab"])
        if vocab.hash() != header["vocab_hash"]:
            raise ValueError(f"{path}: vocabulary hash mismatch")
        return cls(
            kind=header["kind"],
            config=header["config"],
            vocab=vocab,
            params=params,
            metrics=header.get("metrics"),
        )
