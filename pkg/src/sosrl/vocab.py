"""Vocabulary built from a parsed corpus.

Ids are dense and assigned in first-occurrence order, so two builds over
the same corpus produce identical tables. Words and lemmas reserve id 0
for padding and id 1 for unknown entries; roles and senses reserve id 0
for unknown.
"""

from __future__ import annotations

from typing import Iterable

from sosrl.conll09 import SemanticGraph, Sentence

PAD = "<pad>"
UNK = "<unk>"


class Vocab:
    def __init__(
        self,
        words: dict[str, int],
        lemmas: dict[str, int],
        roles: dict[str, int],
        senses: dict[str, int],
    ):
        for name, table in (("words", words), ("lemmas", lemmas), ("roles", roles), ("senses", senses)):
            if sorted(table.values()) != list(range(len(table))):
                raise ValueError(f"{name}: ids must be dense in [0, {len(table)})")
        self.words = words
        self.lemmas = lemmas
        self.roles = roles
        self.senses = senses
        self.role_names = [r for r, _ in sorted(roles.items(), key=lambda kv: kv[1])]
        self.sense_names = [s for s, _ in sorted(senses.items(), key=lambda kv: kv[1])]

    @classmethod
    def build(cls, corpus: Iterable[tuple[Sentence, SemanticGraph]]) -> "Vocab":
        words = {PAD: 0, UNK: 1}
        lemmas = {PAD: 0, UNK: 1}
        roles = {UNK: 0}
        senses = {UNK: 0}
        for sentence, graph in corpus:
            for token in sentence.tokens:
                words.setdefault(token.form, len(words))
                lemmas.setdefault(token.lemma, len(lemmas))
                if token.pred_sense is not None:
                    senses.setdefault(token.pred_sense, len(senses))
            for role in graph.labels.values():
                roles.setdefault(role, len(roles))
        return cls(words, lemmas, roles, senses)

    @property
    def n_roles(self) -> int:
        return len(self.roles)

    @property
    def unk_role_id(self) -> int:
        return self.roles[UNK]

    def word_id(self, form: str) -> int:
        return self.words.get(form, self.words[UNK])

    def lemma_id(self, lemma: str) -> int:
        return self.lemmas.get(lemma, self.lemmas[UNK])

    def role_id(self, role: str) -> int:
        return self.roles.get(role, self.roles[UNK])

    def sense_id(self, sense: str) -> int:
        return self.senses.get(sense, self.senses[UNK])

    def to_json(self) -> dict:
        return {"words": self.words, "lemmas": self.lemmas, "roles": self.roles, "senses": self.senses}

    @classmethod
    def from_json(cls, blob: dict) -> "Vocab":
        return cls(
            {k: int(v) for k, v in blob["words"].items()},
            {k: int(v) for k, v in blob["lemmas"].items()},
            {k: int(v) for k, v in blob["roles"].items()},
            {k: int(v) for k, v in blob["senses"].items()},
        )
