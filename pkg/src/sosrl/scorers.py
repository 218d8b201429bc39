"""Arc, label and second-order part scoring.

Index conventions used throughout (0-based within tensors):

* ``arc[i, j]`` scores the arc predicate ``i`` -> argument ``j``.
* ``label[i, j, r]`` scores role ``r`` for that arc.
* ``sib[i, j, k]`` scores the unordered pair of arcs ``i->j`` and ``i->k``
  (arguments of one predicate); symmetrized over (j, k).
* ``cop[i, j, k]`` scores the unordered pair ``i->j`` and ``k->j``
  (predicates sharing an argument); symmetrized over (i, k).
* ``gp[i, j, k]`` scores the ordered chain ``k -> i -> j`` (token ``i`` is
  the argument of ``k`` and the predicate of ``j``).

A biaffine form scores ordered pairs: ``[v_dep; 1]^T U v_head``. The
triaffine form scores triples: ``[v_k; 1]^T (v_i^T U) [v_j; 1]`` with U of
shape (d, d+1, d+1), i along the first axis, k along the second, j along
the third.

Entries at masked arcs or with any two equal token indices are identically
zero so downstream sums can run over full tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sosrl import autodiff as ad
from sosrl.autodiff import Tensor
from sosrl.encoder import EncodedSentence


@dataclass
class ScoreTensors:
    """All score tensors for one sentence plus the candidate-arc mask."""

    arc: Tensor
    label: Tensor
    sib: Tensor | None
    cop: Tensor | None
    gp: Tensor | None
    mask: np.ndarray

    @property
    def n(self) -> int:
        return self.arc.shape[0]

    def part(self, name: str) -> Tensor | None:
        return getattr(self, name)


def make_scorer_params(
    arc_dim: int,
    n_roles: int,
    triaffine_dim: int,
    parts,
    seed: int = 0,
    dtype=np.float64,
    params: dict[str, Tensor] | None = None,
) -> dict[str, Tensor]:
    """Zero-initialized biaffine/triaffine weights, one tensor per scorer."""
    if params is None:
        params = {}
    params["score.arc.u"] = Tensor(np.zeros((arc_dim + 1, arc_dim), dtype=dtype), requires_grad=True)
    params["score.label.u"] = Tensor(
        np.zeros((arc_dim + 1, n_roles, arc_dim), dtype=dtype), requires_grad=True
    )
    t = triaffine_dim
    for part in parts:
        params[f"score.{part}.u"] = Tensor(np.zeros((t, t + 1, t + 1), dtype=dtype), requires_grad=True)
    return params


def _with_bias(v: Tensor) -> Tensor:
    one = Tensor(np.ones((*v.shape[:-1], 1), dtype=v.dtype))
    return ad.concat([v, one], axis=v.ndim - 1)


def biaffine(v_head: Tensor, v_dep: Tensor, u: Tensor) -> Tensor:
    """Score one ordered (head, dep) pair: ``[v_dep; 1]^T U v_head``.

    With U of shape (d+1, d) the result is a scalar; with (d+1, R, d) it
    is the length-R vector of per-role scores.
    """
    if v_head.ndim != 1 or v_dep.ndim != 1:
        raise ad.ShapeError("biaffine: expected 1-d views")
    dep1 = _with_bias(v_dep)
    if u.ndim == 2:
        mid = ad.einsum("ab,b->a", u, v_head)
        return ad.einsum("a,a->", dep1, mid)
    if u.ndim == 3:
        mid = ad.einsum("arb,b->ar", u, v_head)
        return ad.einsum("a,ar->r", dep1, mid)
    raise ad.ShapeError(f"biaffine: weight must be 2-d or 3-d, got {u.shape}")


def triaffine(v_i: Tensor, v_j: Tensor, v_k: Tensor, u: Tensor) -> Tensor:
    """Score one ordered triple: ``[v_k; 1]^T (v_i^T U) [v_j; 1]``."""
    if u.ndim != 3:
        raise ad.ShapeError(f"triaffine: weight must be 3-d, got {u.shape}")
    w = ad.einsum("a,abc->bc", v_i, u)
    left = ad.einsum("b,bc->c", _with_bias(v_k), w)
    return ad.einsum("c,c->", left, _with_bias(v_j))


def arc_score_matrix(head_view: Tensor, dep_view: Tensor, u: Tensor) -> Tensor:
    """All-pairs arc scores: out[i, j] = biaffine(head i, dep j)."""
    dep1 = _with_bias(dep_view)
    mid = ad.matmul(dep1, u)
    return ad.einsum("ib,jb->ij", head_view, mid)


def label_score_tensor(head_view: Tensor, dep_view: Tensor, u: Tensor) -> Tensor:
    """All-pairs label scores: out[i, j, r]."""
    dep1 = _with_bias(dep_view)
    mid = ad.einsum("ja,arb->jrb", dep1, u)
    return ad.einsum("ib,jrb->ijr", head_view, mid)


def triaffine_score_tensor(v_i: Tensor, v_j: Tensor, v_k: Tensor, u: Tensor) -> Tensor:
    """All-triples scores: out[i, j, k] = triaffine(v_i[i], v_j[j], v_k[k])."""
    w = ad.einsum("ia,abc->ibc", v_i, u)
    left = ad.einsum("kb,ibc->ikc", _with_bias(v_k), w)
    return ad.einsum("jc,ikc->ijk", _with_bias(v_j), left)


def build_arc_mask(n: int, predicate_indices) -> np.ndarray:
    """Candidate arcs: rows restricted to predicates, no self-loops."""
    mask = np.zeros((n, n), dtype=bool)
    for p in predicate_indices:
        mask[p, :] = True
    np.fill_diagonal(mask, False)
    return mask


def _pair_validity(mask: np.ndarray, first: str, second: str) -> np.ndarray:
    """3-d validity of an arc pair, e.g. ("ij", "ik") for siblings."""
    n = mask.shape[0]
    axes = {"i": 0, "j": 1, "k": 2}

    def expand(arc: str) -> np.ndarray:
        a, b = axes[arc[0]], axes[arc[1]]
        shape = [1, 1, 1]
        view = mask
        shape[a] = n
        shape[b] = n
        if a > b:
            view = mask.T
        return view.reshape(shape)

    valid = expand(first) & expand(second)
    idx = np.arange(n)
    valid &= idx[:, None, None] != idx[None, :, None]
    valid &= idx[:, None, None] != idx[None, None, :]
    valid &= idx[None, :, None] != idx[None, None, :]
    return valid


def score_sentence(views: EncodedSentence, params: dict[str, Tensor], mask: np.ndarray) -> ScoreTensors:
    """Compute every score tensor for one encoded sentence.

    Sibling scores are averaged with their (j, k) mirror and co-parent
    scores with their (i, k) mirror, making the unordered parts
    well-defined; grandparent chains stay ordered. Triples with repeated
    indices and tuples touching masked arcs are zeroed.
    """
    n = views.arc_head.shape[0]
    if mask.shape != (n, n):
        raise ad.ShapeError(f"mask shape {mask.shape} != ({n}, {n})")
    dtype = views.arc_head.dtype
    arc_mask_t = Tensor(mask.astype(dtype))

    arc = ad.mul(arc_score_matrix(views.arc_head, views.arc_dep, params["score.arc.u"]), arc_mask_t)
    label = ad.mul(
        label_score_tensor(views.label_head, views.label_dep, params["score.label.u"]),
        ad.reshape(arc_mask_t, (n, n, 1)),
    )

    def masked(part: Tensor, first: str, second: str) -> Tensor:
        return ad.mul(part, Tensor(_pair_validity(mask, first, second).astype(dtype)))

    sib = cop = gp = None
    if "sib" in views.part_views:
        head, dep = views.part_views["sib"]
        raw = triaffine_score_tensor(head, dep, dep, params["score.sib.u"])
        sym = ad.mul(ad.add(raw, ad.transpose(raw, (0, 2, 1))), 0.5)
        sib = masked(sym, "ij", "ik")
    if "cop" in views.part_views:
        head, dep = views.part_views["cop"]
        raw = triaffine_score_tensor(head, dep, head, params["score.cop.u"])
        sym = ad.mul(ad.add(raw, ad.transpose(raw, (2, 1, 0))), 0.5)
        cop = masked(sym, "ij", "kj")
    if "gp" in views.part_views:
        head, dep = views.part_views["gp"]
        if views.head_dep is None:
            raise ValueError("gp scoring needs the head_dep view")
        raw = triaffine_score_tensor(views.head_dep, dep, head, params["score.gp.u"])
        gp = masked(raw, "ki", "ij")

    return ScoreTensors(arc=arc, label=label, sib=sib, cop=cop, gp=gp, mask=mask)
