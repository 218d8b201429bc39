"""End-to-end gradient verification of the composed pipeline.

Builds a tiny model over a synthetic corpus and gradchecks the full
forward chain (embed -> encode -> score -> inference -> loss) against
central differences in 64-bit mode.
"""

from __future__ import annotations

import numpy as np

from sosrl import autodiff as ad
from sosrl.autodiff import GradCheckResult, Tensor, gradcheck
from sosrl.encoder import EncoderConfig
from sosrl.mfvi import DecodeConfig, mfvi
from sosrl.model import SrlModel
from sosrl.synthetic import make_synthetic_corpus
from sosrl.trainer import arc_loss, final_loss, label_loss
from sosrl.vocab import Vocab

GRADCHECK_TOLERANCE = 1e-4

TINY_ENCODER = EncoderConfig(
    word_dim=5,
    lemma_dim=4,
    indicator_dim=3,
    plm_linear_dim=3,
    lstm_layers=2,
    lstm_hidden=5,
    mlp_arc_label_dim=7,
    mlp_triaffine_dim=5,
)


def build_pipeline_fixture(
    seed: int = 0,
    parts=("sib", "cop", "gp"),
    iterations: int = 3,
    balance: float = 0.1,
    feature_dim: int | None = 4,
    n_sentences: int = 2,
    max_len: int = 5,
):
    """A tiny model plus a deterministic scalar objective over it.

    Returns (objective, params, model): calling ``objective()`` runs the
    whole pipeline with dropout off and yields the mean per-sentence loss.
    """
    corpus = make_synthetic_corpus(
        n_sentences=n_sentences, vocab_size=8, n_roles=3,
        min_len=3, max_len=max_len, min_predicates=1, max_predicates=2, seed=seed,
    )
    vocab = Vocab.build(corpus)
    model = SrlModel(
        vocab, TINY_ENCODER, parts=parts, seed=seed, dtype=np.float64, feature_dim=feature_dim,
    )
    # Zero-initialized scorer weights hide scorer bugs from a gradient
    # check, so start them at small random values instead.
    init_rng = np.random.default_rng(np.random.SeedSequence([seed, *b"verify-scorers"]))
    for name, p in model.params.items():
        if name.startswith("score."):
            p.data = init_rng.normal(0.0, 0.4, size=p.data.shape)

    feats_rng = np.random.default_rng(np.random.SeedSequence([seed, *b"verify-features"]))
    features = None
    if feature_dim is not None:
        features = [feats_rng.normal(0.0, 0.8, size=(len(s), feature_dim)) for s, _ in corpus]

    decode_config = DecodeConfig(iterations=iterations)

    def objective() -> Tensor:
        total = None
        for idx, (sentence, graph) in enumerate(corpus):
            feats = features[idx] if features is not None else None
            scores = model.score(sentence, features=feats, train=False)
            posterior = mfvi(scores, decode_config)
            la = arc_loss(posterior.final, graph, scores.mask)
            ll = label_loss(scores.label, graph, scores.mask, vocab.role_id)
            loss = final_loss(la, ll, balance)
            total = loss if total is None else ad.add(total, loss)
        return ad.mul(total, 1.0 / len(corpus))

    return objective, model.params, model


def pipeline_gradcheck(seed: int = 0, iterations: int = 3, eps: float = 1e-5) -> GradCheckResult:
    """Gradcheck the composed pipeline; passes when max error <= 1e-4."""
    objective, params, _ = build_pipeline_fixture(seed=seed, iterations=iterations)
    return gradcheck(objective, params, eps=eps)
