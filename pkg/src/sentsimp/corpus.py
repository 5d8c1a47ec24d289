"""Loaders and batchers for aligned sentence-pair corpora.

Corpus files are plain UTF-8 text, one sentence per line (LF or CRLF).
Evaluation sets follow the <stem>.src / <stem>.ref.0 ... naming scheme.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ParallelExample:
    source: str
    target: str


@dataclass(frozen=True)
class EvalExample:
    source: str
    references: tuple[str, ...]


@dataclass(frozen=True)
class CorpusStats:
    num_pairs: int
    num_refs: int
    max_src_tokens: int
    max_tgt_tokens: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


@dataclass
class Batch:
    source_ids: np.ndarray        # int64 [B, Ls]
    source_pad_mask: np.ndarray   # bool  [B, Ls], True at real tokens
    target_in_ids: np.ndarray     # int64 [B, Lt]
    target_out_ids: np.ndarray    # int64 [B, Lt]
    target_pad_mask: np.ndarray   # bool  [B, Lt]

    @property
    def size(self) -> int:
        return self.source_ids.shape[0]


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\r\n").strip() for line in f]


def load_parallel(src_path, tgt_path) -> list[ParallelExample]:
    """Pair line i of src with line i of tgt; drop pairs with an empty side."""
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise CorpusFormatError(
            f"line count mismatch: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    examples = []
    for i, (s, t) in enumerate(zip(src_lines, tgt_lines), start=1):
        if not s or not t:
            log.warning("dropping pair at line %d: empty %s side", i, "source" if not s else "target")
            continue
        examples.append(ParallelExample(s, t))
    return examples


def load_eval(src_path, ref_paths) -> list[EvalExample]:
    """Read one source file and r reference files of identical length."""
    src_lines = _read_lines(src_path)
    refs = []
    for path in ref_paths:
        lines = _read_lines(path)
        if len(lines) != len(src_lines):
            raise CorpusFormatError(
                f"line count mismatch: {path} has {len(lines)} lines, "
                f"expected {len(src_lines)} (from {src_path})"
            )
        refs.append(lines)
    return [
        EvalExample(s, tuple(r[i] for r in refs))
        for i, s in enumerate(src_lines)
    ]


def find_eval_files(stem) -> tuple[str, list[str]]:
    """Resolve <stem>.src plus every consecutive <stem>.ref.N on disk."""
    src = f"{stem}.src"
    if not os.path.exists(src):
        raise FileNotFoundError(f"evaluation source file not found: {src}")
    refs = []
    while os.path.exists(f"{stem}.ref.{len(refs)}"):
        refs.append(f"{stem}.ref.{len(refs)}")
    if not refs:
        raise FileNotFoundError(f"no reference files matching {stem}.ref.0 ...")
    return src, refs


def parallel_stats(examples: list[ParallelExample]) -> CorpusStats:
    return CorpusStats(
        num_pairs=len(examples),
        num_refs=1,
        max_src_tokens=max((len(e.source.split()) for e in examples), default=0),
        max_tgt_tokens=max((len(e.target.split()) for e in examples), default=0),
    )


def eval_stats(examples: list[EvalExample]) -> CorpusStats:
    return CorpusStats(
        num_pairs=len(examples),
        num_refs=len(examples[0].references) if examples else 0,
        max_src_tokens=max((len(e.source.split()) for e in examples), default=0),
        max_tgt_tokens=max(
            (len(r.split()) for e in examples for r in e.references), default=0
        ),
    )


def make_batches(examples, batch_size: int, pad_id: int, max_len: int,
                 shuffle_seed: int | None = None) -> list[Batch]:
    """Group tokenized (source_ids, target_ids) pairs into padded batches.

    target_ids carry bos...eos; the batch stores the usual teacher-forcing
    split: target_in = ids[:-1], target_out = ids[1:].
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    examples = list(examples)
    for src, tgt in examples:
        if len(src) > max_len or len(tgt) > max_len:
            raise ValueError(f"sequence longer than max_len={max_len}")
    order = np.arange(len(examples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(examples))

    batches = []
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        src_ids, src_mask = _pad_block([s for s, _ in chunk], pad_id)
        tin_ids, tin_mask = _pad_block([t[:-1] for _, t in chunk], pad_id)
        tout_ids, _ = _pad_block([t[1:] for _, t in chunk], pad_id)
        batches.append(Batch(src_ids, src_mask, tin_ids, tout_ids, tin_mask))
    return batches


def _pad_block(seqs, pad_id):
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask
