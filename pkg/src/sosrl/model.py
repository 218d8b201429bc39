"""Model containers wiring the encoder, scorers and inference together."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from sosrl import autodiff as ad
from sosrl.autodiff import Tensor
from sosrl.conll09 import Sentence
from sosrl.embeddings import WordEmbeddings
from sosrl.encoder import (
    PART_TYPES,
    Encoder,
    EncoderConfig,
    LstmStack,
    Mlp,
    glorot,
    numericalize,
    param_rng,
)
from sosrl.mfvi import ArcPosterior, DecodeConfig, decode, mfvi
from sosrl.scorers import ScoreTensors, build_arc_mask, make_scorer_params, score_sentence
from sosrl.vocab import UNK, Vocab

NOT_PRED = "<not-predicate>"
UNK_SENSE = "<unk-sense>"


class SrlModel:
    """Arc/label/second-order scoring model over single sentences."""

    def __init__(
        self,
        vocab: Vocab,
        config: EncoderConfig,
        parts: Iterable[str] = PART_TYPES,
        seed: int = 0,
        dtype=np.float64,
        pretrained: WordEmbeddings | None = None,
        feature_dim: int | None = None,
    ):
        self.vocab = vocab
        self.config = config
        self.parts = tuple(p for p in PART_TYPES if p in set(parts))
        self.seed = seed
        self.dtype = dtype
        self.encoder = Encoder(
            config, vocab, parts=self.parts, seed=seed, dtype=dtype,
            pretrained=pretrained, feature_dim=feature_dim,
        )
        self.params: dict[str, Tensor] = dict(self.encoder.params)
        make_scorer_params(
            config.mlp_arc_label_dim, vocab.n_roles, config.mlp_triaffine_dim,
            self.parts, seed=seed, dtype=dtype, params=self.params,
        )

    def trainable(self) -> dict[str, Tensor]:
        return {name: p for name, p in self.params.items() if p.requires_grad}

    def freeze_second_order(self) -> None:
        """Stop gradient flow into triaffine weights and their view MLPs."""
        for name, p in self.params.items():
            if any(key in name for key in ("sib", "cop", "gp", "head_dep")):
                p.requires_grad = False
                p._track = False

    def score(
        self,
        sentence: Sentence,
        predicate_flags: np.ndarray | None = None,
        features: np.ndarray | None = None,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ScoreTensors:
        word_ids, lemma_ids, flags = numericalize(sentence, self.vocab, predicate_flags)
        predicates = np.nonzero(flags)[0]
        mask = build_arc_mask(len(sentence), predicates)
        embedded = self.encoder.embed(word_ids, lemma_ids, flags, features, train, rng)
        hidden = self.encoder.encode(embedded, train, rng)
        views = self.encoder.role_views(hidden, train, rng)
        return score_sentence(views, self.params, mask)

    def posterior(self, scores: ScoreTensors, decode_config: DecodeConfig) -> ArcPosterior:
        return mfvi(scores, decode_config)

    def predict(
        self,
        sentence: Sentence,
        decode_config: DecodeConfig,
        predicate_flags: np.ndarray | None = None,
        features: np.ndarray | None = None,
    ):
        """Decode one sentence with dropout off; returns a SemanticGraph."""
        scores = self.score(sentence, predicate_flags, features, train=False)
        posterior = self.posterior(scores, decode_config)
        return decode(
            posterior, scores.label, scores.mask, self.vocab.role_names, decode_config,
            skip_role_ids=(self.vocab.unk_role_id,),
        )


@dataclass
class TaggerConfig:
    word_dim: int = 100
    lemma_dim: int = 100
    lstm_layers: int = 3
    lstm_hidden: int = 600
    mlp_dim: int = 600
    input_dropout: float = 0.20
    lstm_ff_dropout: float = 0.45
    lstm_recurrent_dropout: float = 0.25
    mlp_dropout: float = 0.25
    leaky_slope: float = 0.1


class PredicateTagger:
    """Joint predicate identification and sense disambiguation.

    A word+lemma BiLSTM encoder with a per-token classifier over
    NOT_PRED, UNK_SENSE and every sense seen in training. UNK_SENSE
    predictions fall back to "<lemma>.01".
    """

    def __init__(
        self,
        vocab: Vocab,
        config: TaggerConfig | None = None,
        seed: int = 0,
        dtype=np.float64,
        pretrained: WordEmbeddings | None = None,
    ):
        config = config or TaggerConfig()
        self.vocab = vocab
        self.config = config
        self.dtype = dtype
        self.input_dropout = config.input_dropout
        self.classes = [NOT_PRED, UNK_SENSE] + [s for s in vocab.sense_names if s != UNK]
        self.class_id = {c: i for i, c in enumerate(self.classes)}
        self.params: dict[str, Tensor] = {}

        if pretrained is not None:
            if pretrained.dim != config.word_dim:
                raise ValueError(f"pretrained dim {pretrained.dim} != word_dim {config.word_dim}")
            table = np.zeros((len(vocab.words), config.word_dim), dtype=dtype)
            for form, idx in vocab.words.items():
                table[idx] = pretrained.get(form)
            self.params["tagger.embed.word"] = Tensor(table, requires_grad=False)
        else:
            rng = param_rng(seed, "tagger.embed.word")
            self.params["tagger.embed.word"] = Tensor(
                rng.normal(0.0, 1.0 / np.sqrt(config.word_dim), (len(vocab.words), config.word_dim)).astype(dtype),
                requires_grad=True,
            )
        rng = param_rng(seed, "tagger.embed.lemma")
        self.params["tagger.embed.lemma"] = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(config.lemma_dim), (len(vocab.lemmas), config.lemma_dim)).astype(dtype),
            requires_grad=True,
        )
        self.lstm = LstmStack(
            "tagger.lstm", config.word_dim + config.lemma_dim, config.lstm_hidden, config.lstm_layers,
            config.lstm_ff_dropout, config.lstm_recurrent_dropout, seed, dtype, self.params,
        )
        self.mlp = Mlp(
            "tagger.mlp", 2 * config.lstm_hidden, config.mlp_dim, config.mlp_dropout,
            config.leaky_slope, seed, dtype, self.params,
        )
        out_name = "tagger.out.w"
        self.params[out_name] = Tensor(
            glorot(param_rng(seed, out_name), config.mlp_dim, len(self.classes),
                   (config.mlp_dim, len(self.classes)), dtype),
            requires_grad=True,
        )
        self.params["tagger.out.b"] = Tensor(np.zeros(len(self.classes), dtype=dtype), requires_grad=True)

    def trainable(self) -> dict[str, Tensor]:
        return {name: p for name, p in self.params.items() if p.requires_grad}

    def logits(self, sentence: Sentence, train: bool = False, rng=None) -> Tensor:
        word_ids, lemma_ids, _ = numericalize(sentence, self.vocab, np.zeros(len(sentence), dtype=bool))
        n = len(sentence)
        blocks = []
        for name, ids in (("tagger.embed.word", word_ids), ("tagger.embed.lemma", lemma_ids)):
            block = ad.embedding_lookup(self.params[name], ids)
            mask = ad.dropout_mask((n, 1), self.input_dropout, train, rng, dtype=self.dtype)
            blocks.append(block if mask is None else ad.mul(block, mask))
        hidden = self.lstm.run(ad.concat(blocks, axis=1), train, rng)
        features = self.mlp(hidden, train, rng)
        return ad.add(ad.matmul(features, self.params["tagger.out.w"]), self.params["tagger.out.b"])

    def gold_class_ids(self, sentence: Sentence) -> np.ndarray:
        ids = np.zeros(len(sentence), dtype=np.intp)
        for t, token in enumerate(sentence.tokens):
            if token.is_predicate:
                ids[t] = self.class_id.get(token.pred_sense, self.class_id[UNK_SENSE])
        return ids


def tag_predicates(sentence: Sentence, tagger: PredicateTagger) -> tuple[np.ndarray, list[str | None]]:
    """Per-token argmax over the tagger classes.

    Returns predicate flags plus the chosen sense for flagged tokens
    (None elsewhere). An UNK_SENSE winner becomes "<lemma>.01".
    """
    logits = tagger.logits(sentence, train=False).data
    best = np.argmax(logits, axis=1)
    flags = np.zeros(len(sentence), dtype=bool)
    senses: list[str | None] = [None] * len(sentence)
    for t, cls in enumerate(best):
        name = tagger.classes[int(cls)]
        if name == NOT_PRED:
            continue
        flags[t] = True
        senses[t] = f"{sentence.tokens[t].lemma}.01" if name == UNK_SENSE else name
    return flags, senses


def apply_tagging(sentence: Sentence, flags: np.ndarray, senses: Sequence[str | None]) -> Sentence:
    """A copy of the sentence with predicate flags/senses replaced."""
    from sosrl.conll09 import Token

    tokens = tuple(
        Token(
            index=token.index,
            form=token.form,
            lemma=token.lemma,
            is_predicate=bool(flags[t]),
            pred_sense=senses[t] if flags[t] else None,
        )
        for t, token in enumerate(sentence.tokens)
    )
    return Sentence(tokens)
