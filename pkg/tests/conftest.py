import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sentsimp import corpus as C
from sentsimp import tokenizer as tok
from sentsimp.model import ModelConfig, init_model

SIMPLE_NOUNS = ["cat", "dog", "man", "sun", "tree", "bird", "fish", "house"]
SIMPLE_VERBS = ["saw", "ate", "held", "chased"]
SIMPLE_PLACES = ["park", "yard", "field", "barn"]
COMPLEX_ADJS = ["perspicacious", "grandiloquent", "sesquipedalian", "obstreperous",
                "pulchritudinous", "magnanimous"]


def make_toy_pairs(n: int, seed: int = 0) -> list[tuple[str, str]]:
    """Synthetic simplification pairs with a fixed rewrite rule.

    The target drops the ornate adjective and swaps the opening article, so
    a perfect simplification adds a word absent from the source, keeps a
    shared 4-gram, and deletes source material at every n-gram order.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    seen = set()
    while len(pairs) < n:
        n1, n2 = rng.choice(SIMPLE_NOUNS, 2, replace=False)
        verb = rng.choice(SIMPLE_VERBS)
        adj = rng.choice(COMPLEX_ADJS)
        place = rng.choice(SIMPLE_PLACES)
        src = f"the {adj} {n1} {verb} the {n2} in the {place}"
        tgt = f"a {n1} {verb} the {n2} in the {place}"
        if src in seen:
            continue
        seen.add(src)
        pairs.append((src, tgt))
    return pairs


def write_corpus(dirpath: Path, stem: str, pairs, n_refs: int = 1) -> None:
    """Write <stem>.src, <stem>.tgt and <stem>.ref.0..n_refs-1 (refs copy tgt)."""
    (dirpath / f"{stem}.src").write_text("".join(s + "\n" for s, _ in pairs))
    (dirpath / f"{stem}.tgt").write_text("".join(t + "\n" for _, t in pairs))
    for r in range(n_refs):
        (dirpath / f"{stem}.ref.{r}").write_text("".join(t + "\n" for _, t in pairs))


def toy_vocab(pairs) -> tok.Vocabulary:
    return tok.build_vocab([s for s, _ in pairs] + [t for _, t in pairs], max_size=2000)


def tokenized_batches(pairs, vocab, batch_size=8, max_len=80, shuffle_seed=None):
    enc = [
        (tok.encode(vocab, s, max_len).ids, tok.encode(vocab, t, max_len).ids)
        for s, t in pairs
    ]
    return C.make_batches(enc, batch_size, vocab.pad_id, max_len, shuffle_seed=shuffle_seed)


def toy_model_config(vocab_size: int, masking: str = "bidirectional",
                     max_len: int = 80) -> ModelConfig:
    return ModelConfig(d_model=64, n_heads=2, n_layers=2, d_ff=128,
                       vocab_size=vocab_size, max_len=max_len,
                       encoder_masking=masking)


def random_batch(vocab_size: int, seed: int, b=2, ls=6, lt=5) -> C.Batch:
    """A well-formed random batch: bos-leading rows, one padded source tail."""
    rng = np.random.default_rng(seed)
    src = rng.integers(4, vocab_size, size=(b, ls))
    src[:, 0] = 1
    src[0, -1] = 0
    smask = src != 0
    tin = rng.integers(4, vocab_size, size=(b, lt))
    tin[:, 0] = 1
    tout = np.concatenate([tin[:, 1:], np.full((b, 1), 2)], axis=1)
    return C.Batch(src, smask, tin, tout, np.ones_like(tin, dtype=bool))


@pytest.fixture
def toy_pairs():
    return make_toy_pairs(32, seed=0)
