#!/usr/bin/env python3
"""Generate a small synthetic simplification corpus.

Sources follow a fixed template with an ornate adjective; targets drop the
adjective and swap the opening article. Writes train.src/train.tgt plus
valid/test splits with .src and .ref.N files under --out.
"""

import argparse
from pathlib import Path

import numpy as np

NOUNS = ["cat", "dog", "man", "sun", "tree", "bird", "fish", "house"]
VERBS = ["saw", "ate", "held", "chased"]
PLACES = ["park", "yard", "field", "barn"]
ADJS = ["perspicacious", "grandiloquent", "sesquipedalian", "obstreperous",
        "pulchritudinous", "magnanimous"]


def make_pairs(n, seed):
    rng = np.random.default_rng(seed)
    pairs, seen = [], set()
    while len(pairs) < n:
        n1, n2 = rng.choice(NOUNS, 2, replace=False)
        verb = rng.choice(VERBS)
        adj = rng.choice(ADJS)
        place = rng.choice(PLACES)
        src = f"the {adj} {n1} {verb} the {n2} in the {place}"
        if src in seen:
            continue
        seen.add(src)
        pairs.append((src, f"a {n1} {verb} the {n2} in the {place}"))
    return pairs


def write_split(out, stem, pairs, n_refs):
    (out / f"{stem}.src").write_text("".join(s + "\n" for s, _ in pairs))
    (out / f"{stem}.tgt").write_text("".join(t + "\n" for _, t in pairs))
    for r in range(n_refs):
        (out / f"{stem}.ref.{r}").write_text("".join(t + "\n" for _, t in pairs))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--train", type=int, default=64)
    ap.add_argument("--valid", type=int, default=16)
    ap.add_argument("--test", type=int, default=16)
    ap.add_argument("--refs", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_split(out, "train", make_pairs(args.train, args.seed), n_refs=1)
    write_split(out, "valid", make_pairs(args.valid, args.seed + 1), args.refs)
    write_split(out, "test", make_pairs(args.test, args.seed + 2), args.refs)
    print(f"wrote {args.train}/{args.valid}/{args.test} pairs to {out}")


if __name__ == "__main__":
    main()
