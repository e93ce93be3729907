"""Flat INI-style run configuration with per-key overrides and seed derivation."""

from __future__ import annotations

import configparser
import zlib
from pathlib import Path

import numpy as np

from .classifier import ArchConfig, TrainConfig
from .corpus import PpuConfig
from .lm import LmConfig
from .synlog import SynConfig


class UserError(Exception):
    """Invalid input or configuration; the CLI maps this to exit code 2."""


DEFAULTS: dict[str, dict[str, str]] = {
    "run": {
        "seed": "0",
        "out": "runs/out",
    },
    "ppu": {
        "max_word_len": "50",
        "max_line_len": "1000",
        "strip_numbers": "true",
        "category_patterns": "",
        "hard_cap_bytes": "300000",
    },
    "lm": {
        "seq_len": "0",
        "shift": "1",
        "embed_dim": "64",
        "lstm_units": "1024",
        "lr": "1e-4",
        "batch_size": "64",
        "max_epochs": "200",
        "patience": "30",
        "l2": "0.0",
    },
    "arch": {
        "max_len": "50000",
        "embed_dim": "64",
        "conv_layers": "128x7,128x7,128x7",
        "residual": "true",
        "dense_units": "512,512",
        "bilstm": "false",
        "bilstm_units": "64",
    },
    "train": {
        "lr": "1e-4",
        "max_epochs": "200",
        "patience": "30",
        "batch_size": "32",
        "l2": "1e-4",
        "val_fraction": "0.1",
    },
    "synlog": {
        "n_samples": "3262",
        "class_probs": "Pass:0.62,L0_L1:0.21,L2:0.12,L3:0.05",
        "mean_blocks_per_log": "10",
        "block_len_min": "80",
        "block_len_max": "220",
        "signature_strength": "0.9",
    },
    "docembed": {
        "context": "512",
        "overlap": "-1",
        "mask_aware": "true",
        "dim": "64",
    },
}


class RunConfig:
    """Merged view of all module settings, backed by string key/value sections."""

    def __init__(self, sections: dict[str, dict[str, str]] | None = None):
        self.sections = {name: dict(keys) for name, keys in DEFAULTS.items()}
        if sections:
            for name, keys in sections.items():
                for key, value in keys.items():
                    self.set(name, key, value)

    def set(self, section: str, key: str, value: str) -> None:
        if section not in self.sections:
            raise UserError(f"unknown config section [{section}]")
        if key not in self.sections[section]:
            raise UserError(f"unknown config key '{key}' in section [{section}]")
        self.sections[section][key] = value

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def get_int(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError as exc:
            raise UserError(f"[{section}] {key} must be an integer, got {raw!r}") from exc

    def get_float(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError as exc:
            raise UserError(f"[{section}] {key} must be a number, got {raw!r}") from exc

    def get_bool(self, section: str, key: str) -> bool:
        raw = self.get(section, key).strip().lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise UserError(f"[{section}] {key} must be a boolean, got {raw!r}")


def load_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise UserError(f"config file {path} not found or unreadable")
    for section in parser.sections():
        for key, value in parser.items(section):
            cfg.set(section, key, value)
    return cfg


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> None:
    """Apply --set section.key=value overrides."""
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UserError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        cfg.set(section.strip(), key.strip(), value.strip())


def seed_for(global_seed: int, purpose: str) -> int:
    """Derive a per-module seed from the global seed via a keyed counter stream."""
    key = zlib.crc32(purpose.encode("utf-8"))
    seq = np.random.SeedSequence(entropy=global_seed, spawn_key=(key,))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def parse_conv_layers(spec: str) -> list[tuple[int, int]]:
    """Parse "128x7,128x7" into [(filters, kernel), ...]."""
    layers = []
    for piece in spec.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            filters, kernel = piece.lower().split("x")
            layers.append((int(filters), int(kernel)))
        except ValueError as exc:
            raise UserError(f"bad conv layer spec {piece!r}; expected FILTERSxKERNEL") from exc
    if not layers:
        raise UserError("conv_layers must name at least one layer")
    return layers


def parse_class_probs(spec: str) -> dict[str, float]:
    probs = {}
    for piece in spec.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            name, value = piece.split(":")
            probs[name.strip()] = float(value)
        except ValueError as exc:
            raise UserError(f"bad class probability {piece!r}; expected Name:prob") from exc
    return probs


def ppu_config(cfg: RunConfig) -> PpuConfig:
    patterns = [p.strip() for p in cfg.get("ppu", "category_patterns").split(",") if p.strip()]
    try:
        return PpuConfig(
            max_word_len=cfg.get_int("ppu", "max_word_len"),
            max_line_len=cfg.get_int("ppu", "max_line_len"),
            strip_numbers=cfg.get_bool("ppu", "strip_numbers"),
            category_patterns=patterns,
        )
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def lm_config(cfg: RunConfig, seq_len: int, seed: int) -> LmConfig:
    try:
        return LmConfig(
            seq_len=seq_len,
            shift=cfg.get_int("lm", "shift"),
            embed_dim=cfg.get_int("lm", "embed_dim"),
            lstm_units=cfg.get_int("lm", "lstm_units"),
            lr=cfg.get_float("lm", "lr"),
            batch_size=cfg.get_int("lm", "batch_size"),
            max_epochs=cfg.get_int("lm", "max_epochs"),
            patience=cfg.get_int("lm", "patience"),
            l2=cfg.get_float("lm", "l2"),
            seed=seed,
        )
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def arch_config(cfg: RunConfig, max_len: int | None = None,
                bilstm: bool | None = None) -> ArchConfig:
    try:
        return ArchConfig(
            max_len=max_len if max_len is not None else cfg.get_int("arch", "max_len"),
            embed_dim=cfg.get_int("arch", "embed_dim"),
            conv_layers=parse_conv_layers(cfg.get("arch", "conv_layers")),
            residual=cfg.get_bool("arch", "residual"),
            dense_units=[
                int(u) for u in cfg.get("arch", "dense_units").split(",") if u.strip()
            ],
            bilstm_front=bilstm if bilstm is not None else cfg.get_bool("arch", "bilstm"),
            bilstm_units=cfg.get_int("arch", "bilstm_units"),
        )
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    try:
        return TrainConfig(
            lr=cfg.get_float("train", "lr"),
            max_epochs=cfg.get_int("train", "max_epochs"),
            early_stop_patience=cfg.get_int("train", "patience"),
            batch_size=cfg.get_int("train", "batch_size"),
            l2=cfg.get_float("train", "l2"),
            seed=seed,
            val_fraction=cfg.get_float("train", "val_fraction"),
        )
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def syn_config(cfg: RunConfig, n_samples: int | None, seed: int) -> SynConfig:
    try:
        return SynConfig(
            n_samples=n_samples if n_samples is not None else cfg.get_int("synlog", "n_samples"),
            class_probs=parse_class_probs(cfg.get("synlog", "class_probs")),
            mean_blocks_per_log=cfg.get_int("synlog", "mean_blocks_per_log"),
            block_len_range=(
                cfg.get_int("synlog", "block_len_min"),
                cfg.get_int("synlog", "block_len_max"),
            ),
            signature_strength=cfg.get_float("synlog", "signature_strength"),
            seed=seed,
        )
    except ValueError as exc:
        raise UserError(str(exc)) from exc
