"""Second-order semantic role labeling toolkit.

A numpy-based library for graph SRL: predicate-argument arcs are scored
with biaffine attention, arc pairs (siblings, co-parents, grandparents)
with triaffine attention, and the final arc posterior is obtained by a
fixed number of differentiable mean-field updates so the whole model
trains end to end.
"""

from sosrl.autodiff import Tensor, Tape, backward, gradcheck
from sosrl.conll09 import (
    ConllParseError,
    ConllWriteError,
    SemanticGraph,
    Sentence,
    Token,
    read_conll09,
    write_conll09,
)
from sosrl.embeddings import FeatureFile, WordEmbeddings, load_embeddings, load_features
from sosrl.encoder import EncoderConfig
from sosrl.evaluation import (
    EvalResult,
    HOProfile,
    bootstrap_significance,
    ho_profile,
    semantic_f1,
    subset_eval,
)
from sosrl.mfvi import ArcPosterior, DecodeConfig, decode, mfvi, second_order_votes
from sosrl.model import SrlModel
from sosrl.scorers import ScoreTensors, biaffine, score_sentence, triaffine
from sosrl.trainer import TrainConfig, arc_loss, final_loss, label_loss, train
from sosrl.vocab import Vocab

__version__ = "0.1.0"

__all__ = [
    "ArcPosterior",
    "ConllParseError",
    "ConllWriteError",
    "DecodeConfig",
    "EncoderConfig",
    "EvalResult",
    "FeatureFile",
    "HOProfile",
    "ScoreTensors",
    "SemanticGraph",
    "Sentence",
    "SrlModel",
    "Tape",
    "Tensor",
    "Token",
    "TrainConfig",
    "Vocab",
    "WordEmbeddings",
    "arc_loss",
    "backward",
    "biaffine",
    "bootstrap_significance",
    "decode",
    "final_loss",
    "gradcheck",
    "ho_profile",
    "label_loss",
    "load_embeddings",
    "load_features",
    "mfvi",
    "read_conll09",
    "score_sentence",
    "second_order_votes",
    "semantic_f1",
    "subset_eval",
    "train",
    "triaffine",
    "write_conll09",
]
