#!/usr/bin/env python3
"""Writes random corpus-BLEU cases scored by sacrebleu, for the C++ tests.

Settings mirror corpus_bleu: whitespace tokens, floor smoothing at 1e-9,
effective order. Usage: gen_bleu_fixtures.py OUT.json [N]
"""
import json
import random
import sys

from sacrebleu.metrics import BLEU

VOCAB = "the a hotel is near centre cheap phone number name area food thai italian north south".split()


def sentence(rng, lo, hi):
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


def mutate(rng, ref):
    toks = ref.split()
    out = [t if rng.random() > 0.3 else rng.choice(VOCAB) for t in toks if rng.random() > 0.1]
    if rng.random() < 0.3:
        out.append(rng.choice(VOCAB))
    return " ".join(out)


def main():
    out_path = sys.argv[1]
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 200
    rng = random.Random(20211)
    bleu = BLEU(tokenize="none", smooth_method="floor", smooth_value=1e-9, effective_order=True)
    cases = []
    while len(cases) < n:
        items = rng.randint(1, 6)
        n_refs = rng.randint(1, 3)
        refs = [[sentence(rng, 1, 12) for _ in range(items)] for _ in range(n_refs)]
        hyps = [mutate(rng, refs[0][i]) for i in range(items)]
        if not any(h.split() for h in hyps):
            continue
        score = bleu.corpus_score(hyps, refs).score
        # Per item reference lists, as corpus_bleu takes them.
        per_item = [[refs[r][i] for r in range(n_refs)] for i in range(items)]
        cases.append({"hypotheses": hyps, "references": per_item, "bleu": score})
    with open(out_path, "w") as f:
        json.dump({"generator": "sacrebleu " + __import__("sacrebleu").__version__, "cases": cases}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
