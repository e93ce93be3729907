"""Labeled synthetic TM500-style logs with per-layer defect signatures.

Logs are sequences of Confirmation ("C:") and Indication ("I:") blocks built
from a benign vocabulary.  Defect logs additionally carry a class-specific
multi-line signature block with probability ``signature_strength``; signature
lines use words that never appear in benign blocks, contain no standalone
numbers and no over-long words, so they survive PPU cleaning intact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CLASSES, write_manifest

DEFAULT_CLASS_PROBS = {"Pass": 0.62, "L0_L1": 0.21, "L2": 0.12, "L3": 0.05}

# class-exclusive signature blocks; header markers double as test probes
SIGNATURES = {
    "L0_L1": {
        "header": "I: PHY ALARM carrier lock lost on radio unit",
        "details": (
            "prach preamble detection failure burst observed",
            "rsrp degradation beyond recovery threshold",
            "power amplifier drift outside calibrated window",
            "timing advance correlation collapsed on antenna port",
        ),
    },
    "L2": {
        "header": "I: MAC ALARM harq retransmission overflow on downlink",
        "details": (
            "rlc reassembly failure with sequence gap detected",
            "pdcp integrity mismatch against configured profile",
            "scheduler starvation flagged for logical channel",
            "mac padding ratio exceeded configured ceiling",
        ),
    },
    "L3": {
        "header": "I: RRC ALARM connection reestablishment rejected",
        "details": (
            "nas registration aborted after timer expiry",
            "s1ap initial context setup failure reported",
            "session admission denied by core gateway",
            "tracking area update loop detected on connection",
        ),
    },
}

SIGNATURE_MARKERS = {name: sig["header"].split("I: ")[1] for name, sig in SIGNATURES.items()}

_BENIGN_HEADERS = (
    "C: CELL_CONFIG applied for carrier",
    "C: UE_ATTACH procedure acknowledged",
    "C: FORWARD_TEST_MODE entered",
    "C: SCHEDULER_PROFILE loaded",
    "I: MEAS_REPORT window closed",
    "I: THROUGHPUT_SAMPLE recorded",
    "I: SYNC_STATE steady",
    "I: GRANT_TRACE flushed",
)

_BENIGN_WORDS = (
    "attach complete measurement report received throughput stable handover "
    "accepted active sync achieved scheduling grant issued uplink downlink "
    "buffer status nominal confirmed carrier aggregation steady window refresh "
    "counters cleared profile applied normal duplex pattern verified trace "
    "segment archived metric sampled within expected envelope baseline"
).split()


@dataclass
class SynConfig:
    n_samples: int = 3262
    class_probs: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_PROBS))
    mean_blocks_per_log: int = 10
    block_len_range: tuple[int, int] = (80, 220)
    signature_strength: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        missing = [c for c in self.class_probs if c not in CLASSES]
        if missing:
            raise ValueError(f"unknown classes in class_probs: {missing}")
        total = sum(self.class_probs.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"class_probs must sum to 1, got {total}")
        if not 0.0 < self.signature_strength <= 1.0:
            raise ValueError("signature_strength must lie in (0, 1]")
        lo, hi = self.block_len_range
        if lo < 40 or hi < lo:
            raise ValueError("block_len_range must satisfy 40 <= min <= max")
        if self.mean_blocks_per_log < 1:
            raise ValueError("mean_blocks_per_log must be positive")


def _rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def _tag(rng) -> str:
    letters = "abcdefghjkmnpqrstuvwxyz"
    return "".join(rng.choice(list(letters), size=2))


def _benign_block(rng, target_len: int) -> str:
    lines = [f"{rng.choice(_BENIGN_HEADERS)} cell-{_tag(rng)} ue-{_tag(rng)}"]
    length = len(lines[0])
    while length < target_len:
        n_words = int(rng.integers(4, 9))
        words = list(rng.choice(_BENIGN_WORDS, size=n_words))
        if rng.random() < 0.25:
            # bare counters are PPU fodder; benign content must not rely on them
            words.append(str(int(rng.integers(0, 99999))))
        line = "    " + " ".join(words)
        lines.append(line)
        length += len(line) + 1
    return "\n".join(lines)


def _signature_block(label: str, rng) -> str:
    sig = SIGNATURES[label]
    details = list(sig["details"])
    order = rng.permutation(len(details))
    n_detail = int(rng.integers(2, len(details) + 1))
    lines = [sig["header"]]
    lines.extend("    " + details[i] for i in order[:n_detail])
    return "\n".join(lines)


def generate_log(label: str, rng: np.random.Generator, cfg: SynConfig | None = None) -> str:
    """One synthetic log; defect labels inject their signature block with
    probability cfg.signature_strength."""
    if label not in CLASSES:
        raise ValueError(f"invalid label {label!r}")
    cfg = cfg or SynConfig()
    lo, hi = cfg.block_len_range
    n_blocks = max(2, int(rng.poisson(cfg.mean_blocks_per_log)))
    blocks = [_benign_block(rng, int(rng.integers(lo, hi + 1))) for _ in range(n_blocks)]
    if label != "Pass" and rng.random() < cfg.signature_strength:
        pos = int(rng.integers(0, len(blocks) + 1))
        blocks.insert(pos, _signature_block(label, rng))
    return "\n".join(blocks) + "\n"


def draw_labels(cfg: SynConfig) -> list[str]:
    """Multinomial label draw from class_probs, deterministic under cfg.seed."""
    rng = _rng_for(cfg.seed, 2**31)
    names = [c for c in CLASSES if cfg.class_probs.get(c, 0.0) > 0.0]
    probs = np.array([cfg.class_probs[c] for c in names], dtype=np.float64)
    probs = probs / probs.sum()
    picks = rng.choice(len(names), size=cfg.n_samples, p=probs)
    return [names[i] for i in picks]


def generate_dataset(cfg: SynConfig, out_dir: str | Path, manifest_path: str | Path | None = None):
    """Write n_samples log files plus a manifest CSV; returns (paths, manifest path).

    The manifest defaults to <out_dir>/manifest.csv; pass manifest_path to
    keep it outside the scanned log directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = draw_labels(cfg)
    rows = []
    paths = []
    for i, label in enumerate(labels):
        rng = _rng_for(cfg.seed, i)
        name = f"log_{i:05d}.log"
        path = out / name
        path.write_text(generate_log(label, rng, cfg), encoding="utf-8")
        rows.append((name, label))
        paths.append(path)
    manifest = Path(manifest_path) if manifest_path is not None else out / "manifest.csv"
    write_manifest(manifest, rows)
    return paths, manifest


def signature_present(text: str, label: str) -> bool:
    """True when the class-specific signature marker occurs in the text."""
    if label == "Pass":
        return any(marker in text for marker in SIGNATURE_MARKERS.values())
    return SIGNATURE_MARKERS[label] in text
