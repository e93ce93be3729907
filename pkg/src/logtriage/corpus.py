"""Log ingestion, PPU-style cleaning, Tukey size filtering and corpus assembly."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLASSES = ("Pass", "L0_L1", "L2", "L3")
CLASS_TO_INDEX = {name: i for i, name in enumerate(CLASSES)}

DEFAULT_HARD_CAP_BYTES = 300_000

_NUMBER_TOKEN = re.compile(r"[+-]?\d+")


@dataclass(frozen=True)
class LogRecord:
    """One software log: decoded text plus bookkeeping for filtering."""

    id: str
    text: str
    byte_size: int
    label: str | None = None
    source_path: str = ""

    def __post_init__(self):
        if self.label is not None and self.label not in CLASSES:
            raise ValueError(f"invalid label {self.label!r}; expected one of {CLASSES}")

    @property
    def char_count(self) -> int:
        return len(self.text)


@dataclass
class PpuConfig:
    """Rules for the pre-processing unit: drop over-long words/lines and bare numbers."""

    max_word_len: int = 50
    max_line_len: int = 1000
    strip_numbers: bool = True
    category_patterns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.max_word_len < 1:
            raise ValueError("max_word_len must be >= 1")
        if self.max_line_len < self.max_word_len:
            raise ValueError("max_line_len must be >= max_word_len")


@dataclass
class SizeFilterReport:
    q1: float
    q3: float
    iqr: float
    lower_bound: float
    upper_bound: float
    hard_cap_bytes: int
    kept_ids: list[str]
    dropped_ids: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "q1": self.q1,
                "q3": self.q3,
                "iqr": self.iqr,
                "lower_bound": self.lower_bound,
                "upper_bound": self.upper_bound,
                "hard_cap_bytes": self.hard_cap_bytes,
                "kept_ids": self.kept_ids,
                "dropped_ids": self.dropped_ids,
            },
            indent=2,
        )


def read_manifest(path: str | Path) -> dict[str, str]:
    """Read a ``path,label`` CSV manifest, validating labels against the class set."""
    labels: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label"]:
            raise ValueError(f"manifest must start with header 'path,label', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"malformed manifest row {lineno}: {row!r}")
            rel, label = row[0].strip(), row[1].strip()
            if label not in CLASSES:
                raise ValueError(
                    f"manifest row {lineno}: invalid label {label!r}; expected one of {CLASSES}"
                )
            labels[rel] = label
    return labels


def write_manifest(path: str | Path, rows: list[tuple[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        writer.writerows(rows)


def scan_corpus(
    root_path: str | Path,
    manifest: str | Path | None = None,
    warnings_out: list[str] | None = None,
) -> list[LogRecord]:
    """Scan a directory tree into LogRecords, deterministically ordered by id.

    Ids are POSIX-style paths relative to the root.  Unreadable files are
    skipped with a warning entry; a manifest row naming a missing file is a
    hard error.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise ValueError(f"corpus root {root} is not a readable directory")
    labels = read_manifest(manifest) if manifest is not None else {}

    paths = sorted(
        (p for p in root.rglob("*") if p.is_file()),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    records = []
    seen = set()
    for path in paths:
        rel = path.relative_to(root).as_posix()
        seen.add(rel)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            if warnings_out is not None:
                warnings_out.append(f"skipped unreadable file {rel}: {exc}")
            continue
        records.append(
            LogRecord(
                id=rel,
                text=raw.decode("utf-8", errors="replace"),
                byte_size=len(raw),
                label=labels.get(rel),
                source_path=str(path),
            )
        )
    missing = sorted(set(labels) - seen)
    if missing:
        raise ValueError(f"manifest names files not present under {root}: {missing[:5]}")
    return records


def preprocess_log(raw_text: str, cfg: PpuConfig) -> str:
    """Apply the PPU rules to one log.

    Lines longer than max_line_len are dropped whole; tokens longer than
    max_word_len and (optionally) standalone integer tokens are removed.
    Surviving tokens are rejoined with single spaces, which makes the
    operation idempotent.
    """
    out_lines = []
    for line in raw_text.split("\n"):
        if len(line) > cfg.max_line_len:
            continue
        kept = [
            tok
            for tok in line.split()
            if len(tok) <= cfg.max_word_len
            and not (cfg.strip_numbers and _NUMBER_TOKEN.fullmatch(tok))
        ]
        out_lines.append(" ".join(kept))
    return "\n".join(out_lines)


def matches_category(text: str, cfg: PpuConfig) -> bool:
    """True when the log matches any configured category pattern (default: keep all)."""
    if not cfg.category_patterns:
        return True
    return any(re.search(pat, text) for pat in cfg.category_patterns)


def preprocess_records(records: list[LogRecord], cfg: PpuConfig) -> list[LogRecord]:
    """PPU-clean every record, keeping only those matching the category patterns."""
    out = []
    for rec in records:
        if not matches_category(rec.text, cfg):
            continue
        cleaned = preprocess_log(rec.text, cfg)
        out.append(
            LogRecord(
                id=rec.id,
                text=cleaned,
                byte_size=len(cleaned.encode("utf-8")),
                label=rec.label,
                source_path=rec.source_path,
            )
        )
    return out


def tukey_filter(
    records: list[LogRecord], hard_cap_bytes: int = DEFAULT_HARD_CAP_BYTES
) -> SizeFilterReport:
    """Flag size outliers outside the Tukey fences or above the byte cap.

    Quartiles use linear interpolation on the sorted character counts.
    """
    if not records:
        raise ValueError("tukey_filter requires at least one record")
    sizes = np.array([rec.char_count for rec in records], dtype=np.float64)
    q1, q3 = np.quantile(sizes, [0.25, 0.75])
    iqr = q3 - q1
    lower = q1 - 1.5 * iqr
    upper = q3 + 1.5 * iqr
    kept, dropped = [], []
    for rec in records:
        ok = lower <= rec.char_count <= upper and rec.byte_size <= hard_cap_bytes
        (kept if ok else dropped).append(rec.id)
    return SizeFilterReport(
        q1=float(q1),
        q3=float(q3),
        iqr=float(iqr),
        lower_bound=float(lower),
        upper_bound=float(upper),
        hard_cap_bytes=hard_cap_bytes,
        kept_ids=kept,
        dropped_ids=dropped,
    )


def size_histogram(records: list[LogRecord], n_bins: int) -> list[tuple[float, float, int]]:
    """Histogram of character counts over n_bins even bins spanning [min, max]."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if not records:
        raise ValueError("size_histogram requires at least one record")
    sizes = np.array([rec.char_count for rec in records], dtype=np.float64)
    counts, edges = np.histogram(sizes, bins=n_bins, range=(sizes.min(), sizes.max()))
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)
    ]


def build_training_corpus(records: list[LogRecord]) -> str:
    """Concatenate record texts in id order, separated by single newlines."""
    ordered = sorted(records, key=lambda r: r.id)
    return "\n".join(rec.text for rec in ordered)
