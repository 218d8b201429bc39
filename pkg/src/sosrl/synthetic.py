"""Deterministic synthetic corpora for experiments and tests.

Sentences draw forms from a closed vocabulary; each predicate receives a
sense "<lemma>.01"/".02" and one to three arguments with random roles,
which naturally produces sibling, co-parent and grandparent structures.
"""

from __future__ import annotations

import numpy as np

from sosrl.conll09 import SemanticGraph, Sentence, Token


def make_synthetic_corpus(
    n_sentences: int = 10,
    vocab_size: int = 50,
    n_roles: int = 4,
    min_len: int = 5,
    max_len: int = 9,
    min_predicates: int = 1,
    max_predicates: int = 3,
    seed: int = 0,
) -> list[tuple[Sentence, SemanticGraph]]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, *b"synthetic"]))
    roles = [f"R{r}" for r in range(n_roles)]
    corpus = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        forms = [f"w{int(w):02d}" for w in rng.integers(0, vocab_size, size=n)]
        high = min(max_predicates, n - 1)
        low = min(min_predicates, high)
        n_preds = int(rng.integers(low, high + 1)) if high > 0 else 0
        pred_positions = sorted(rng.choice(n, size=n_preds, replace=False).tolist()) if n_preds else []

        labels: dict[tuple[int, int], str] = {}
        for pos in pred_positions:
            head = pos + 1
            candidates = [t for t in range(1, n + 1) if t != head]
            n_args = int(rng.integers(1, min(3, len(candidates)) + 1))
            for dep in rng.choice(candidates, size=n_args, replace=False).tolist():
                labels[(head, int(dep))] = roles[int(rng.integers(0, n_roles))]

        tokens = []
        for t in range(n):
            is_pred = (t in pred_positions)
            sense = f"{forms[t]}.0{int(rng.integers(1, 3))}" if is_pred else None
            tokens.append(
                Token(
                    index=t + 1,
                    form=forms[t],
                    lemma=forms[t],
                    is_predicate=is_pred,
                    pred_sense=sense,
                )
            )
        corpus.append((Sentence(tuple(tokens)), SemanticGraph(n, labels)))
    return corpus
