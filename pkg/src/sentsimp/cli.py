"""Command-line entry point: train / simplify / eval / report.

Settings merge in order: built-in defaults, then a key=value config file
(--config), then explicit flags. Every run echoes its effective settings
into the output directory as config.resolved so it can be replayed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import corpus as C
from . import sari as S
from . import tokenizer as tok
from .decoding import DecodeConfig, simplify
from .model import VARIANTS, init_model, variant_config
from .train import (CheckpointFormatError, TrainConfig, TrainingDivergedError,
                    history_tsv, load_checkpoint, model_from_checkpoint, save_checkpoint,
                    train_loop)
from .tensor import NonFiniteError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

# Published Mechanical Turk results, shown alongside our runs for context.
PAPER_VARIANT_ROWS = [
    ("BERT", 46.80, 12.13, 67.16, 61.22),
    ("GPT-2", 46.35, 12.60, 66.64, 59.73),
    ("GPT-2+BERT", 42.35, 10.74, 62.37, 54.05),
    ("BERT+GPT-2", 42.31, 11.07, 62.82, 53.93),
]
LITERATURE_ROWS = [
    ("Zhao et al. (2018)", 40.42, 5.72, 42.23, 73.41),
    ("Martin et al. (2019)", 41.87, None, None, None),
    ("Omelianchuk et al. (2021)", 41.46, 6.96, 47.87, 69.56),
    ("Sheang & Saggion (2021)", 43.31, None, None, None),
    ("Stajner et al. (2022)", 43.30, None, None, None),
]


def _read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad config line (expected key=value): {line!r}")
            values[key.strip()] = value.strip()
    return values


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        merged.update(_read_config_file(args.config))
    for key in defaults:
        flag = getattr(args, key.replace(".", "_"), None)
        if flag is not None:
            merged[key] = flag
    return merged


def _write_resolved(out_dir, settings: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.resolved"), "w", encoding="utf-8") as f:
        for key in sorted(settings):
            f.write(f"{key}={settings[key]}\n")


TRAIN_DEFAULTS = {
    "variant": "bert",
    "scale": "toy",
    "seed": "0",
    "epochs": "20",
    "batch_size": "8",
    "patience": "3",
    "max_vocab": "2000",
    "min_freq": "1",
    "base_lr": "1e-4",
    "max_lr": "1e-3",
}


def cmd_train(args) -> int:
    cfg = _effective(args, TRAIN_DEFAULTS)
    out_dir = args.out
    train_examples = C.load_parallel(args.train_src, args.train_tgt)
    if not train_examples:
        raise C.CorpusFormatError("training corpus is empty after filtering")
    src_eval, ref_paths = C.find_eval_files(args.valid_stem)
    valid = C.load_eval(src_eval, ref_paths)

    seed = int(cfg["seed"])
    vocab = tok.build_vocab(
        [e.source for e in train_examples] + [e.target for e in train_examples],
        max_size=int(cfg["max_vocab"]), min_freq=int(cfg["min_freq"]),
    )
    model_cfg = variant_config(cfg["variant"], cfg["scale"], vocab_size=vocab.size)
    patience = None if cfg["patience"].lower() in ("none", "off") else int(cfg["patience"])
    train_cfg = TrainConfig(
        base_lr=float(cfg["base_lr"]), max_lr=float(cfg["max_lr"]),
        epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
        patience=patience, seed=seed,
    )

    pairs = [
        (tok.encode(vocab, e.source, model_cfg.max_len).ids,
         tok.encode(vocab, e.target, model_cfg.max_len).ids)
        for e in train_examples
    ]
    batches = C.make_batches(pairs, train_cfg.batch_size, vocab.pad_id,
                             model_cfg.max_len, shuffle_seed=seed)
    model = init_model(model_cfg, seed)
    ckpt, history = train_loop(model, batches, valid, train_cfg, vocab)

    _write_resolved(out_dir, {**cfg, "out": out_dir})
    save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.bin"))
    with open(os.path.join(out_dir, "history.tsv"), "w", encoding="utf-8") as f:
        f.write(history_tsv(history))
    log.info("trained %s for %d epochs, best SARI %.2f at epoch %d",
             cfg["variant"], len(history.epochs),
             max(r.valid_sari for r in history.epochs), history.best_epoch)
    return EXIT_OK


def cmd_simplify(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    decode_cfg = DecodeConfig(max_len=ckpt.config.max_len, strategy=args.strategy,
                              beam_width=args.beam_width)
    with open(args.input, encoding="utf-8") as f:
        lines = [line.rstrip("\r\n") for line in f]
    with open(args.output, "w", encoding="utf-8") as f:
        for line in lines:
            out = simplify(model, ckpt.vocab, line, decode_cfg) if line.strip() else ""
            f.write(out + "\n")
    return EXIT_OK


def _format_row(label, sari, add, delete, keep):
    def fmt(v):
        return f"{v:6.2f}" if v is not None else "     -"
    return f"{label:<28} {fmt(sari)} {fmt(add)} {fmt(delete)} {fmt(keep)}"


def cmd_eval(args) -> int:
    src_path, ref_paths = C.find_eval_files(args.eval_stem)
    evals = C.load_eval(src_path, ref_paths)
    with open(args.system, encoding="utf-8") as f:
        outputs = [line.rstrip("\r\n") for line in f]
    if len(outputs) != len(evals):
        raise C.CorpusFormatError(
            f"system output has {len(outputs)} lines, evaluation set has {len(evals)}"
        )
    report, scores = S.sari_corpus(
        (e.source, out, list(e.references)) for e, out in zip(evals, outputs)
    )
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    label = args.label or os.path.basename(os.path.normpath(out_dir))

    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump({"label": label, "sari": report.sari, "add": report.add,
                   "keep": report.keep, "delete": report.delete, "n": len(scores)},
                  f, indent=2)
        f.write("\n")

    lines = [f"{'Model':<28}   SARI    ADD DELETE   KEEP",
             _format_row(label, report.sari, report.add, report.delete, report.keep),
             "",
             "Published Mechanical Turk results (reference constants):"]
    for row in PAPER_VARIANT_ROWS:
        lines.append(_format_row(*row))
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    with open(os.path.join(out_dir, "sentences.tsv"), "w", encoding="utf-8") as f:
        f.write("index\tsari\tsari_normalized\n")
        for i, s in enumerate(scores):
            f.write(f"{i}\t{s!r}\t{s / 100.0!r}\n")

    with open(os.path.join(out_dir, "histogram.tsv"), "w", encoding="utf-8") as f:
        f.write("bin_lower\tcount\n")
        for lower, count in S.score_histogram(scores, args.bins):
            f.write(f"{lower!r}\t{count}\n")

    print(f"SARI {report.sari:.2f}  ADD {report.add:.2f}  "
          f"DELETE {report.delete:.2f}  KEEP {report.keep:.2f}  (n={len(scores)})")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "report.json")
        if not os.path.exists(path):
            log.warning("skipping %s: no report.json", run_dir)
            continue
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        rows.append((data["label"], data["sari"], data["add"], data["delete"], data["keep"]))
    rows.sort(key=lambda r: -r[1])

    lines = [f"{'Model':<28}   SARI    ADD DELETE   KEEP"]
    for row in rows:
        lines.append(_format_row(*row))
    lines.append("")
    lines.append("Published results (static):")
    for row in LITERATURE_ROWS:
        lines.append(_format_row(*row))
    table = "\n".join(lines)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "comparison.txt"), "w", encoding="utf-8") as f:
            f.write(table + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentsimp",
                                     description="Sentence simplification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--seed", type=str, default=None)
        p.add_argument("--variant", choices=sorted(VARIANTS), default=None)
        p.add_argument("--scale", choices=["paper", "toy"], default=None)
        p.add_argument("--out", required=True, help="run/output directory")

    p = sub.add_parser("train", help="fine-tune a variant on a parallel corpus")
    shared(p)
    p.add_argument("--train-src", required=True)
    p.add_argument("--train-tgt", required=True)
    p.add_argument("--valid-stem", required=True,
                   help="stem of <stem>.src and <stem>.ref.N validation files")
    p.add_argument("--epochs", type=str, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=str, default=None)
    p.add_argument("--patience", type=str, default=None, help="integer or 'none'")
    p.add_argument("--max-vocab", dest="max_vocab", type=str, default=None)
    p.add_argument("--min-freq", dest="min_freq", type=str, default=None)
    p.add_argument("--base-lr", dest="base_lr", type=str, default=None)
    p.add_argument("--max-lr", dest="max_lr", type=str, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simplify", help="decode an input file with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--strategy", choices=["greedy", "beam"], default="greedy")
    p.add_argument("--beam-width", dest="beam_width", type=int, default=4)
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("eval", help="score a system output file with SARI")
    p.add_argument("--system", required=True, help="system output, one sentence per line")
    p.add_argument("--eval-stem", dest="eval_stem", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None)
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="tabulate eval results from run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, C.CorpusFormatError, CheckpointFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteError, TrainingDivergedError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
