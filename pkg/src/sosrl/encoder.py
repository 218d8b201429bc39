"""Sentence encoder: concatenated embeddings, stacked BiLSTM, role views.

The input vector of a token is word embedding + lemma embedding +
predicate-indicator embedding, optionally + a learned linear projection of
precomputed contextual features. A stacked bidirectional LSTM produces the
contextual state H, and a bank of one-layer MLPs (leaky rectifier) maps H
into the role-specific views consumed by the scorers: head/dep views for
arcs and labels, head/dep views per second-order part type, and a shared
head_dep view for tokens acting as both predicate and argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from sosrl import autodiff as ad
from sosrl.autodiff import Tensor
from sosrl.embeddings import WordEmbeddings
from sosrl.vocab import Vocab

PART_TYPES = ("sib", "cop", "gp")


def param_rng(seed: int, name: str) -> np.random.Generator:
    """A dedicated RNG stream per parameter name.

    Keyed streams make initialization independent of creation order, so
    e.g. enabling or disabling the second-order scorers leaves every other
    parameter's initial value untouched.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, *name.encode("utf-8")]))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class EncoderConfig:
    word_dim: int = 100
    lemma_dim: int = 100
    indicator_dim: int = 50
    plm_linear_dim: int = 100
    lstm_layers: int = 3
    lstm_hidden: int = 600
    mlp_arc_label_dim: int = 600
    mlp_triaffine_dim: int = 150
    emb_dropout: float = 0.20
    lstm_ff_dropout: float = 0.45
    lstm_recurrent_dropout: float = 0.25
    arc_mlp_dropout: float = 0.25
    label_mlp_dropout: float = 0.33
    triaffine_mlp_dropout: float = 0.25
    leaky_slope: float = 0.1
    tune_word_embeddings: bool = False

    def validate(self) -> None:
        for name in (
            "word_dim", "lemma_dim", "indicator_dim", "plm_linear_dim",
            "lstm_layers", "lstm_hidden", "mlp_arc_label_dim", "mlp_triaffine_dim",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"EncoderConfig.{name} must be positive")
        for name in (
            "emb_dropout", "lstm_ff_dropout", "lstm_recurrent_dropout",
            "arc_mlp_dropout", "label_mlp_dropout", "triaffine_mlp_dropout",
        ):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"EncoderConfig.{name} must be in [0, 1)")


@dataclass
class EncodedSentence:
    """Role-specific views of the encoder output, all with n rows."""

    hidden: Tensor
    arc_head: Tensor
    arc_dep: Tensor
    label_head: Tensor
    label_dep: Tensor
    part_views: dict[str, tuple[Tensor, Tensor]] = field(default_factory=dict)
    head_dep: Tensor | None = None


class LstmStack:
    """Stacked BiLSTM over one sentence: (n, d_in) -> (n, 2*hidden).

    Dropout is variational: one input mask and one recurrent mask per
    layer and direction, shared across all time steps of the sentence.
    """

    def __init__(
        self,
        prefix: str,
        in_dim: int,
        hidden: int,
        layers: int,
        ff_dropout: float,
        recurrent_dropout: float,
        seed: int,
        dtype,
        params: dict[str, Tensor],
    ):
        self.prefix = prefix
        self.in_dim = in_dim
        self.hidden = hidden
        self.layers = layers
        self.ff_dropout = ff_dropout
        self.recurrent_dropout = recurrent_dropout
        self.dtype = dtype
        self._names: list[dict[str, str]] = []
        for layer in range(layers):
            layer_in = in_dim if layer == 0 else 2 * hidden
            names = {}
            for direction in ("fw", "bw"):
                for kind, shape, fan in (
                    ("w_ih", (layer_in, 4 * hidden), (layer_in, 4 * hidden)),
                    ("w_hh", (hidden, 4 * hidden), (hidden, 4 * hidden)),
                    ("b", (4 * hidden,), None),
                ):
                    name = f"{prefix}.l{layer}.{direction}.{kind}"
                    if fan is None:
                        params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
                    else:
                        params[name] = Tensor(
                            glorot(param_rng(seed, name), fan[0], fan[1], shape, dtype),
                            requires_grad=True,
                        )
                    names[f"{direction}.{kind}"] = name
            self._names.append(names)
        self.params = params

    def _run_direction(self, x: Tensor, names, direction: str, train: bool, rng) -> Tensor:
        n = x.shape[0]
        w_ih = self.params[names[f"{direction}.w_ih"]]
        w_hh = self.params[names[f"{direction}.w_hh"]]
        bias = self.params[names[f"{direction}.b"]]
        rmask = ad.dropout_mask((1, self.hidden), self.recurrent_dropout, train, rng, dtype=self.dtype)
        h = Tensor(np.zeros((1, self.hidden), dtype=self.dtype))
        c = Tensor(np.zeros((1, self.hidden), dtype=self.dtype))
        order = range(n) if direction == "fw" else range(n - 1, -1, -1)
        steps: list[Tensor] = []
        for t in order:
            x_t = ad.narrow(x, 0, t, 1)
            h_in = h if rmask is None else ad.mul(h, rmask)
            h, c = ad.lstm_cell(x_t, h_in, c, w_ih, w_hh, bias)
            steps.append(h)
        if direction == "bw":
            steps.reverse()
        return ad.concat(steps, axis=0)

    def run(self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        if x.shape[0] == 0:
            raise ValueError("cannot encode an empty sentence")
        out = x
        for layer in range(self.layers):
            names = self._names[layer]
            in_mask = ad.dropout_mask((1, out.shape[1]), self.ff_dropout, train, rng, dtype=self.dtype)
            layer_in = out if in_mask is None else ad.mul(out, in_mask)
            fw = self._run_direction(layer_in, names, "fw", train, rng)
            bw = self._run_direction(layer_in, names, "bw", train, rng)
            out = ad.concat([fw, bw], axis=1)
        return out


class Mlp:
    """One affine layer plus leaky rectifier, with output dropout."""

    def __init__(self, prefix: str, in_dim: int, out_dim: int, p_drop: float, slope: float,
                 seed: int, dtype, params: dict[str, Tensor]):
        self.w_name = f"{prefix}.w"
        self.b_name = f"{prefix}.b"
        self.p_drop = p_drop
        self.slope = slope
        params[self.w_name] = Tensor(
            glorot(param_rng(seed, self.w_name), in_dim, out_dim, (in_dim, out_dim), dtype),
            requires_grad=True,
        )
        params[self.b_name] = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)
        self.params = params

    def __call__(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        y = ad.leaky_relu(ad.add(ad.matmul(x, self.params[self.w_name]), self.params[self.b_name]), self.slope)
        return ad.dropout(y, self.p_drop, train, rng)


class Encoder:
    """Embedding tables + BiLSTM + role-view MLP bank for one model."""

    def __init__(
        self,
        config: EncoderConfig,
        vocab: Vocab,
        parts: Iterable[str] = PART_TYPES,
        seed: int = 0,
        dtype=np.float64,
        pretrained: WordEmbeddings | None = None,
        feature_dim: int | None = None,
    ):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.parts = tuple(p for p in PART_TYPES if p in set(parts))
        self.dtype = dtype
        self.feature_dim = feature_dim
        self.params: dict[str, Tensor] = {}

        n_words = len(vocab.words)
        if pretrained is not None:
            if pretrained.dim != config.word_dim:
                raise ValueError(f"pretrained dim {pretrained.dim} != word_dim {config.word_dim}")
            table = np.zeros((n_words, config.word_dim), dtype=dtype)
            for form, idx in vocab.words.items():
                table[idx] = pretrained.get(form)
            self.params["embed.word"] = Tensor(table, requires_grad=config.tune_word_embeddings)
        else:
            rng = param_rng(seed, "embed.word")
            scale = 1.0 / np.sqrt(config.word_dim)
            self.params["embed.word"] = Tensor(
                rng.normal(0.0, scale, (n_words, config.word_dim)).astype(dtype), requires_grad=True
            )
        for name, rows, dim in (
            ("embed.lemma", len(vocab.lemmas), config.lemma_dim),
            ("embed.indicator", 2, config.indicator_dim),
        ):
            rng = param_rng(seed, name)
            self.params[name] = Tensor(
                rng.normal(0.0, 1.0 / np.sqrt(dim), (rows, dim)).astype(dtype), requires_grad=True
            )
        if feature_dim is not None:
            self.params["embed.plm.w"] = Tensor(
                glorot(param_rng(seed, "embed.plm.w"), feature_dim, config.plm_linear_dim,
                       (feature_dim, config.plm_linear_dim), dtype),
                requires_grad=True,
            )
            self.params["embed.plm.b"] = Tensor(np.zeros(config.plm_linear_dim, dtype=dtype), requires_grad=True)

        self.input_dim = config.word_dim + config.lemma_dim + config.indicator_dim
        if feature_dim is not None:
            self.input_dim += config.plm_linear_dim

        self.lstm = LstmStack(
            "lstm", self.input_dim, config.lstm_hidden, config.lstm_layers,
            config.lstm_ff_dropout, config.lstm_recurrent_dropout, seed, dtype, self.params,
        )

        h_dim = 2 * config.lstm_hidden
        d1 = config.mlp_arc_label_dim
        d2 = config.mlp_triaffine_dim
        self.mlps: dict[str, Mlp] = {}
        for name, dim, rate in (
            ("arc_head", d1, config.arc_mlp_dropout),
            ("arc_dep", d1, config.arc_mlp_dropout),
            ("label_head", d1, config.label_mlp_dropout),
            ("label_dep", d1, config.label_mlp_dropout),
        ):
            self.mlps[name] = Mlp(f"mlp.{name}", h_dim, dim, rate, config.leaky_slope, seed, dtype, self.params)
        for part in self.parts:
            for role in ("head", "dep"):
                name = f"{part}_{role}"
                self.mlps[name] = Mlp(
                    f"mlp.{name}", h_dim, d2, config.triaffine_mlp_dropout, config.leaky_slope,
                    seed, dtype, self.params,
                )
        if "gp" in self.parts:
            self.mlps["head_dep"] = Mlp(
                "mlp.head_dep", h_dim, d2, config.triaffine_mlp_dropout, config.leaky_slope,
                seed, dtype, self.params,
            )

    def embed(
        self,
        word_ids: np.ndarray,
        lemma_ids: np.ndarray,
        predicate_flags: np.ndarray,
        features: np.ndarray | None = None,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Concatenate the per-token embedding blocks into E (n, input_dim).

        Embedding dropout removes whole vectors (one mask entry per token
        and block), the usual regime for token-level features.
        """
        n = len(word_ids)
        if len(lemma_ids) != n or len(predicate_flags) != n:
            raise ValueError("word/lemma/flag arrays must have equal length")
        blocks = []
        p = self.config.emb_dropout
        for name, ids in (
            ("embed.word", word_ids),
            ("embed.lemma", lemma_ids),
            ("embed.indicator", np.asarray(predicate_flags, dtype=np.intp)),
        ):
            block = ad.embedding_lookup(self.params[name], ids)
            mask = ad.dropout_mask((n, 1), p, train, rng, dtype=self.dtype)
            blocks.append(block if mask is None else ad.mul(block, mask))
        if features is not None:
            if self.feature_dim is None:
                raise ValueError("encoder was built without a feature projection")
            if features.shape != (n, self.feature_dim):
                raise ValueError(
                    f"feature block shape {features.shape} != ({n}, {self.feature_dim})"
                )
            feats = Tensor(np.asarray(features, dtype=self.dtype))
            blocks.append(ad.add(ad.matmul(feats, self.params["embed.plm.w"]), self.params["embed.plm.b"]))
        elif self.feature_dim is not None:
            raise ValueError("encoder expects a feature block for every sentence")
        return ad.concat(blocks, axis=1)

    def encode(self, embedded: Tensor, train: bool = False, rng=None) -> Tensor:
        return self.lstm.run(embedded, train, rng)

    def role_views(self, hidden: Tensor, train: bool = False, rng=None) -> EncodedSentence:
        part_views = {
            part: (
                self.mlps[f"{part}_head"](hidden, train, rng),
                self.mlps[f"{part}_dep"](hidden, train, rng),
            )
            for part in self.parts
        }
        return EncodedSentence(
            hidden=hidden,
            arc_head=self.mlps["arc_head"](hidden, train, rng),
            arc_dep=self.mlps["arc_dep"](hidden, train, rng),
            label_head=self.mlps["label_head"](hidden, train, rng),
            label_dep=self.mlps["label_dep"](hidden, train, rng),
            part_views=part_views,
            head_dep=self.mlps["head_dep"](hidden, train, rng) if "gp" in self.parts else None,
        )


def numericalize(sentence, vocab: Vocab, predicate_flags=None):
    """Token ids and predicate flags for one sentence.

    ``predicate_flags`` overrides the sentence's own predicate marking,
    which is how tagger predictions are injected at inference time.
    """
    word_ids = np.array([vocab.word_id(t.form) for t in sentence.tokens], dtype=np.intp)
    lemma_ids = np.array([vocab.lemma_id(t.lemma) for t in sentence.tokens], dtype=np.intp)
    if predicate_flags is None:
        flags = np.array([t.is_predicate for t in sentence.tokens], dtype=bool)
    else:
        flags = np.asarray(predicate_flags, dtype=bool)
        if flags.shape != (len(sentence),):
            raise ValueError("predicate_flags length mismatch")
    return word_ids, lemma_ids, flags
