"""Differentiable mean-field inference over arc posteriors.

Each arc carries a two-state variable (exists / does not exist) whose
unary potential is the first-order arc score; the not-exist state is
pinned at zero, so a single update normalizes to a sigmoid. Iteration t
recomputes every arc's vote total from the previous posterior::

    G[i, j] = sum over k not in {i, j} of
          Q[i, k] * sib[i, j, k]      (other arguments of head i)
        + Q[k, j] * cop[i, j, k]      (other predicates of argument j)
        + Q[k, i] * gp[i, j, k]       (chains k -> i -> j)
        + Q[j, k] * gp[j, k, i]       (chains i -> j -> k)

    Q[i, j] at step t = sigmoid(arc[i, j] + G[i, j])

with Q at step 0 = sigmoid(arc). All updates are ordinary tape ops, so a
loss on the final posterior backpropagates through every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sosrl import autodiff as ad
from sosrl.autodiff import NumericError, Tensor
from sosrl.conll09 import SemanticGraph
from sosrl.scorers import ScoreTensors


@dataclass
class DecodeConfig:
    iterations: int = 3
    arc_threshold: float = 0.5

    def validate(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 < self.arc_threshold < 1.0:
            raise ValueError("arc_threshold must be in (0, 1)")


@dataclass
class ArcPosterior:
    """Arc-existence probabilities across iterations; history[t] is Q at t."""

    history: list[Tensor] = field(default_factory=list)

    @property
    def final(self) -> Tensor:
        return self.history[-1]

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def _triple_validity(n: int, dtype) -> Tensor:
    idx = np.arange(n)
    distinct = (
        (idx[:, None, None] != idx[None, :, None])
        & (idx[:, None, None] != idx[None, None, :])
        & (idx[None, :, None] != idx[None, None, :])
    )
    return Tensor(distinct.astype(dtype))


def second_order_votes(q_prev: Tensor, scores: ScoreTensors) -> Tensor:
    """The vote total G for every arc given the previous posterior.

    The k-exclusion is enforced here with an explicit validity mask, so
    hand-built score tensors with junk on the repeated-index diagonals
    still produce correct votes.
    """
    n = q_prev.shape[0]
    if q_prev.shape != (n, n):
        raise ad.ShapeError(f"posterior must be square, got {q_prev.shape}")
    dtype = q_prev.dtype
    valid = _triple_validity(n, dtype)
    terms = []
    if scores.sib is not None:
        sib = ad.mul(scores.sib, valid)
        terms.append(ad.einsum("ik,ijk->ij", q_prev, sib))
    if scores.cop is not None:
        cop = ad.mul(scores.cop, valid)
        terms.append(ad.einsum("kj,ijk->ij", q_prev, cop))
    if scores.gp is not None:
        gp = ad.mul(scores.gp, valid)
        terms.append(ad.einsum("ki,ijk->ij", q_prev, gp))
        terms.append(ad.einsum("jk,jki->ij", q_prev, gp))
    mask_t = Tensor(scores.mask.astype(dtype))
    if not terms:
        return Tensor(np.zeros((n, n), dtype=dtype))
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return ad.mul(total, mask_t)


def mfvi(scores: ScoreTensors, config: DecodeConfig) -> ArcPosterior:
    """Run the configured number of updates; gradients flow through all."""
    config.validate()
    for name in ("arc", "sib", "cop", "gp"):
        t = getattr(scores, name)
        if t is not None and not np.all(np.isfinite(t.data)):
            raise NumericError(f"mfvi: non-finite values in {name} scores")
    mask_t = Tensor(scores.mask.astype(scores.arc.dtype))
    q = ad.mul(ad.sigmoid(scores.arc), mask_t)
    posterior = ArcPosterior(history=[q])
    for _ in range(config.iterations):
        votes = second_order_votes(q, scores)
        q = ad.mul(ad.sigmoid(ad.add(scores.arc, votes)), mask_t)
        posterior.history.append(q)
    return posterior


def decode(
    posterior: ArcPosterior,
    label_scores: Tensor,
    mask: np.ndarray,
    role_names,
    config: DecodeConfig,
    skip_role_ids=(),
) -> SemanticGraph:
    """Threshold the final posterior and pick the best role per arc.

    Arcs are the unmasked cells with probability >= the threshold (ties
    included); each selected arc gets the argmax role, ignoring ids in
    ``skip_role_ids`` (the unknown-role bucket). Token indices in the
    returned graph are 1-based.
    """
    q = posterior.final.data
    scores = np.array(label_scores.data, copy=True)
    if skip_role_ids:
        scores[:, :, list(skip_role_ids)] = -np.inf
    labels: dict[tuple[int, int], str] = {}
    heads, deps = np.nonzero((q >= config.arc_threshold) & mask)
    for i, j in zip(heads, deps):
        role = role_names[int(np.argmax(scores[i, j]))]
        labels[(int(i) + 1, int(j) + 1)] = role
    return SemanticGraph(q.shape[0], labels)
