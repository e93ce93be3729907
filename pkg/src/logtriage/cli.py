"""Command line entry point: the triage pipeline as subcommands over a shared config."""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import config as cfgmod
from . import docembed, lm, synlog
from .checkpoint import Checkpoint
from .config import RunConfig, UserError
from .corpus import (
    CLASSES,
    build_training_corpus,
    preprocess_log,
    preprocess_records,
    scan_corpus,
    tukey_filter,
    write_manifest,
)
from .vocab import build_vocab, encode_corpus, load_vocab, save_vocab


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a single config key (repeatable)",
    )


def _setup(args) -> tuple[RunConfig, int]:
    cfg = cfgmod.load_config(args.config)
    cfgmod.apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg.set("run", "seed", str(args.seed))
    return cfg, cfg.get_int("run", "seed")


def _load_clean_records(in_dir: Path, manifest: Path | None, cfg: RunConfig,
                        warnings_out: list[str] | None = None):
    records = scan_corpus(in_dir, manifest=manifest, warnings_out=warnings_out)
    if manifest is not None:
        manifest_abs = str(Path(manifest).resolve())
        records = [r for r in records if str(Path(r.source_path).resolve()) != manifest_abs]
    return preprocess_records(records, cfgmod.ppu_config(cfg))


def _labeled_dataset(records, vocab, max_len):
    labeled = [r for r in records if r.label is not None]
    if not labeled:
        raise UserError("no labeled records found; check the manifest")
    return clf.encode_dataset(labeled, vocab, max_len)


def cmd_synth(args) -> int:
    cfg, seed = _setup(args)
    syn = cfgmod.syn_config(cfg, args.n, cfgmod.seed_for(seed, "synlog"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # logs live in a subdirectory so scans never pick up the manifests
    paths, manifest = synlog.generate_dataset(syn, out / "logs", out / "manifest.csv")
    labels = synlog.draw_labels(syn)
    counts = {name: labels.count(name) for name in CLASSES}
    if args.test_fraction > 0:
        label_idx = np.array([CLASSES.index(l) for l in labels])
        train_idx, test_idx = clf.stratified_split(
            label_idx, args.test_fraction, cfgmod.seed_for(seed, "split")
        )
        rows = [(p.name, l) for p, l in zip(paths, labels)]
        write_manifest(out / "train_manifest.csv", [rows[i] for i in train_idx])
        write_manifest(out / "test_manifest.csv", [rows[i] for i in test_idx])
    print(f"wrote {len(paths)} logs to {out / 'logs'} (manifest: {manifest.name})")
    print("class counts: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_preprocess(args) -> int:
    cfg, _seed = _setup(args)
    warnings: list[str] = []
    records = _load_clean_records(Path(args.in_dir), args.manifest, cfg, warnings)
    if not records:
        raise UserError("no logs found")
    report = tukey_filter(records, hard_cap_bytes=cfg.get_int("ppu", "hard_cap_bytes"))
    kept = {rid for rid in report.kept_ids}
    corpus = build_training_corpus([r for r in records if r.id in kept])
    if not corpus:
        raise UserError("all logs were filtered out; relax the PPU/filter settings")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus.txt").write_text(corpus, encoding="utf-8")
    payload = json.loads(report.to_json())
    payload["warnings"] = warnings
    (out / "report.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    vocab = build_vocab(corpus)
    save_vocab(vocab, out / "vocab.json")
    print(
        f"kept {len(report.kept_ids)}/{len(records)} logs; corpus {len(corpus)} chars; "
        f"vocab size {vocab.size} ({vocab.size - 2} characters + 2 reserved)"
    )
    return 0


def cmd_lm_train(args) -> int:
    cfg, seed = _setup(args)
    corpus = Path(args.corpus).read_text(encoding="utf-8")
    vocab = load_vocab(args.vocab)
    seq_len = cfg.get_int("lm", "seq_len")
    if seq_len <= 0:
        seq_len = lm.median_block_length(corpus)
        print(f"sequence length from median block length: {seq_len}")
    lm_cfg = cfgmod.lm_config(cfg, seq_len, cfgmod.seed_for(seed, "lm"))
    ids = encode_corpus(corpus, vocab)
    pairs = lm.sequence_pair_arrays(ids, lm_cfg.seq_len, lm_cfg.shift)
    ckpt, history, model = lm.lm_train(pairs, vocab, lm_cfg)
    ckpt.save(args.out)
    Path(str(args.out) + ".history.json").write_text(json.dumps(history), encoding="utf-8")
    print(
        f"trained LM: {model.param_count()} parameters, {len(history['loss'])} epochs, "
        f"best loss {min(history['loss']):.4f} -> {args.out}"
    )
    return 0


def cmd_lm_export_emb(args) -> int:
    _cfg, _seed = _setup(args)
    ckpt = Checkpoint.load(args.ckpt)
    table = lm.extract_char_embeddings(ckpt)
    lm.write_embedding_file(args.out, table, ckpt.vocab)
    print(f"exported character embeddings shape ({table.shape[0]}, {table.shape[1]}) -> {args.out}")
    return 0


def cmd_clf_train(args) -> int:
    cfg, seed = _setup(args)
    records = _load_clean_records(Path(args.in_dir), args.manifest, cfg)
    labeled = [r for r in records if r.label is not None]
    if not labeled:
        raise UserError("no labeled records found; check the manifest")
    if args.vocab is not None:
        vocab = load_vocab(args.vocab)
    else:
        vocab = build_vocab("\n".join(r.text for r in labeled))
    init_emb = None
    if args.emb is not None:
        table, vocab_hash = lm.read_embedding_file(args.emb)
        if vocab_hash != vocab.hash():
            raise UserError(
                "embedding file was exported for a different vocabulary; "
                "pass the matching --vocab"
            )
        init_emb = table
    if args.arch_conv_layers:
        cfg.set("arch", "conv_layers", args.arch_conv_layers)
    arch = cfgmod.arch_config(cfg, max_len=args.max_len, bilstm=args.bilstm or None)
    train_cfg = cfgmod.train_config(cfg, cfgmod.seed_for(seed, "train"))
    dataset = clf.encode_dataset(labeled, vocab, arch.max_len)
    train_idx, val_idx = clf.stratified_split(
        dataset.labels, train_cfg.val_fraction, cfgmod.seed_for(seed, "val-split")
    )
    model = clf.build_model(arch, vocab, init_embeddings=init_emb,
                            seed=cfgmod.seed_for(seed, "init"))
    print(
        f"training classifier: {model.param_count()} parameters, "
        f"{len(train_idx)} train / {len(val_idx)} val samples, max_len {arch.max_len}"
    )
    ckpt, history = clf.train(model, dataset.subset(train_idx), dataset.subset(val_idx), train_cfg)
    ckpt.save(args.out)
    Path(str(args.out) + ".history.json").write_text(json.dumps(history), encoding="utf-8")
    print(
        f"done: {len(history['train_loss'])} epochs, "
        f"best val loss {min(history['val_loss']):.4f}, "
        f"final val accuracy {history['val_accuracy'][-1]:.4f} -> {args.out}"
    )
    return 0


def cmd_clf_eval(args) -> int:
    cfg, _seed = _setup(args)
    ckpt = Checkpoint.load(args.ckpt)
    model = clf.SequenceClassifier.from_checkpoint(ckpt)
    records = _load_clean_records(Path(args.in_dir), args.manifest, cfg)
    dataset = _labeled_dataset(records, ckpt.vocab, model.arch.max_len)
    metrics = clf.evaluate(model, dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(metrics.to_json(), encoding="utf-8")
    (out / "confusion.csv").write_text(metrics.confusion_csv(), encoding="utf-8")
    print(
        f"accuracy {metrics.accuracy:.4f}, macro-F1 {metrics.f1_macro:.4f}, "
        f"micro-F1 {metrics.f1_micro:.4f} over {len(dataset)} samples -> {out}"
    )
    return 0


def cmd_clf_predict(args) -> int:
    cfg, _seed = _setup(args)
    ckpt = Checkpoint.load(args.ckpt)
    model = clf.SequenceClassifier.from_checkpoint(ckpt)
    ppu = cfgmod.ppu_config(cfg)
    for path in args.files:
        text = preprocess_log(Path(path).read_text(encoding="utf-8", errors="replace"), ppu)
        label, probs = clf.predict(model, text)
        print(
            json.dumps(
                {
                    "path": str(path),
                    "class": label,
                    "probabilities": {
                        name: float(p) for name, p in zip(CLASSES[: len(probs)], probs)
                    },
                }
            )
        )
    return 0


def cmd_embed(args) -> int:
    cfg, seed = _setup(args)
    vocab = load_vocab(args.vocab)
    records = _load_clean_records(Path(args.in_dir), args.manifest, cfg)
    if not records:
        raise UserError("no logs found")
    context = cfg.get_int("docembed", "context")
    overlap = cfg.get_int("docembed", "overlap")
    if overlap < 0:
        overlap = context // 2
    mask_aware = cfg.get_bool("docembed", "mask_aware")
    if args.provider == "mock":
        provider = docembed.mock_provider(
            dim=cfg.get_int("docembed", "dim"), seed=cfgmod.seed_for(seed, "mock-provider")
        )
    else:
        if not args.endpoint:
            raise UserError("--endpoint is required with --provider http")
        provider = docembed.http_provider(args.endpoint, auth_token=args.auth_token)
    ids = []
    vectors = []
    for rec in records:
        tokens = encode_corpus(rec.text, vocab)
        if len(tokens) == 0:
            tokens = np.array([vocab.pad_id], dtype=np.int32)
        emb = docembed.embed_document(
            tokens, provider, context, overlap, mask_aware=mask_aware, pad_id=vocab.pad_id
        )
        ids.append(rec.id)
        vectors.append(emb.vector)
    docembed.save_embedding_store(args.out, ids, np.stack(vectors), provider.provider_id)
    print(f"embedded {len(ids)} documents (dim {vectors[0].shape[0]}) -> {args.out}")
    return 0


def cmd_sweep_context(args) -> int:
    cfg, seed = _setup(args)
    records = _load_clean_records(Path(args.in_dir), args.manifest, cfg)
    labeled = [r for r in records if r.label is not None]
    if not labeled:
        raise UserError("no labeled records found; check the manifest")
    vocab = build_vocab("\n".join(r.text for r in labeled))
    try:
        grid = [int(x) for x in args.grid.split(",") if x.strip()]
    except ValueError as exc:
        raise UserError(f"bad --grid {args.grid!r}; expected comma-separated ints") from exc
    if not grid:
        raise UserError("--grid must name at least one context length")
    train_cfg = cfgmod.train_config(cfg, cfgmod.seed_for(seed, "train"))
    label_idx = np.array([CLASSES.index(r.label) for r in labeled])
    train_idx, test_idx = clf.stratified_split(
        label_idx, args.test_fraction, cfgmod.seed_for(seed, "split")
    )
    rows = []
    for max_len in grid:
        t0 = time.perf_counter()
        arch = cfgmod.arch_config(cfg, max_len=max_len)
        dataset = clf.encode_dataset(labeled, vocab, max_len)
        train_all = dataset.subset(train_idx)
        tr_idx, va_idx = clf.stratified_split(
            train_all.labels, train_cfg.val_fraction, cfgmod.seed_for(seed, "val-split")
        )
        model = clf.build_model(arch, vocab, seed=cfgmod.seed_for(seed, "init"))
        clf.train(model, train_all.subset(tr_idx), train_all.subset(va_idx), train_cfg)
        metrics = clf.evaluate(model, dataset.subset(test_idx))
        seconds = time.perf_counter() - t0
        rows.append((max_len, metrics.accuracy, metrics.f1_macro, seconds))
        print(f"max_len {max_len}: accuracy {metrics.accuracy:.4f}, "
              f"macro-F1 {metrics.f1_macro:.4f} ({seconds:.1f}s)")
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("max_len,accuracy,f1_macro,seconds\n")
        for max_len, acc, f1, seconds in rows:
            fh.write(f"{max_len},{acc:.6f},{f1:.6f},{seconds:.2f}\n")
    print(f"sweep results -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logtriage",
        description="Telecom log triage: preprocessing, char-LM embeddings, "
                    "residual CNN classification, document embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=int, default=None, help="number of samples")
    p.add_argument("--test-fraction", type=float, default=0.0,
                   help="also emit stratified train/test manifests")
    _common_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="scan, clean and size-filter logs into a corpus")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("lm-train", help="train the character LSTM language model")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("lm-export-emb", help="export the LM's character embedding table")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_lm_export_emb)

    p = sub.add_parser("clf-train", help="train the residual CNN classifier")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--emb", type=Path, default=None, help="LM embedding export for init")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--bilstm", action="store_true", help="insert a BiLSTM after the embedding")
    p.add_argument("--arch.conv-layers", dest="arch_conv_layers", default=None,
                   metavar="SPEC", help='e.g. "128x7,128x7,128x7"')
    _common_flags(p)
    p.set_defaults(func=cmd_clf_train)

    p = sub.add_parser("clf-eval", help="evaluate a classifier checkpoint")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_clf_eval)

    p = sub.add_parser("clf-predict", help="classify log files, one JSON line each")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("files", nargs="+", type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_clf_predict)

    p = sub.add_parser("embed", help="compute sliding-window document embeddings")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--vocab", required=True, type=Path)
    p.add_argument("--provider", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint", default=None, help="URL for --provider http")
    p.add_argument("--auth-token", default=None)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sweep-context", help="accuracy vs context length sweep")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--grid", default="1000,5000,10000,50000,80000,200000")
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--out", required=True, type=Path)
    _common_flags(p)
    p.set_defaults(func=cmd_sweep_context)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UserError, ValueError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
