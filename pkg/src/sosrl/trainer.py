"""Losses, optimization schedule, batching and checkpointing.

Training runs in two phases: Adam with a periodically halved learning
rate, then (once the dev score stalls for ``phase_patience`` steps) the
same moments driven through an AMSGrad update. Dev labeled-F1 is measured
every ``eval_every`` steps; the best-scoring parameters are checkpointed
and training stops after ``stop_patience`` steps without improvement or
at ``max_steps``.

The training log is line-delimited JSON with no timestamps, so two runs
with the same seed produce byte-identical logs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from sosrl import autodiff as ad
from sosrl.autodiff import NumericError, Tape, Tensor, backward, zero_grads
from sosrl.checkpoint import load_checkpoint, save_checkpoint
from sosrl.conll09 import SemanticGraph, Sentence
from sosrl.encoder import EncoderConfig
from sosrl.evaluation import semantic_f1
from sosrl.mfvi import DecodeConfig, mfvi
from sosrl.model import (
    PredicateTagger,
    SrlModel,
    TaggerConfig,
    tag_predicates,
)
from sosrl.vocab import Vocab

__all__ = [
    "TrainConfig",
    "TrainResult",
    "Adam",
    "arc_loss",
    "label_loss",
    "final_loss",
    "l2_penalty",
    "train",
    "train_tagger",
    "tag_predicates",
    "make_batches",
    "save_model",
    "load_model",
    "save_tagger",
    "load_tagger",
]


@dataclass
class TrainConfig:
    balance: float = 0.1            # weight of the arc loss vs the label loss
    lr: float = 1e-2
    adam_beta1: float = 0.0
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8
    l2: float = 3e-9
    lr_decay: float = 0.5
    lr_decay_steps: int = 10000
    clip_norm: float = 5.0
    batch_tokens: int = 4000
    max_steps: int = 100000
    eval_every: int = 100
    phase_patience: int = 5000
    stop_patience: int = 10000
    target_dev_f1: float | None = None
    precision: int = 32

    def validate(self) -> None:
        if not 0.0 <= self.balance <= 1.0:
            raise ValueError("balance must be in [0, 1]")
        for name in ("lr", "lr_decay", "lr_decay_steps", "clip_norm", "batch_tokens",
                     "max_steps", "eval_every", "phase_patience", "stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")


@dataclass
class TrainResult:
    best_f1: float
    best_step: int
    steps: int
    phase: str
    log: list[dict] = field(default_factory=list)


# ---------------------------------------------------------------------------
# losses


def _clip_eps(dtype) -> float:
    return 1e-7 if np.dtype(dtype) == np.float32 else 1e-12


def gold_arc_matrix(graph: SemanticGraph, n: int, dtype=np.float64) -> np.ndarray:
    y = np.zeros((n, n), dtype=dtype)
    for head, dep in graph.arcs:
        y[head - 1, dep - 1] = 1.0
    return y


def arc_loss(q_final: Tensor, graph: SemanticGraph, mask: np.ndarray) -> Tensor:
    """Mean binary cross-entropy between the posterior and gold arcs,
    over unmasked cells only."""
    n = q_final.shape[0]
    if mask.shape != (n, n):
        raise ad.ShapeError(f"mask shape {mask.shape} != ({n}, {n})")
    cells = int(mask.sum())
    if cells == 0:
        return Tensor(np.zeros((), dtype=q_final.dtype))
    eps = _clip_eps(q_final.dtype)
    y = Tensor(gold_arc_matrix(graph, n, dtype=q_final.dtype))
    m = Tensor(mask.astype(q_final.dtype))
    log_q = ad.log(ad.clip(q_final, eps, 1.0))
    log_not_q = ad.log(ad.clip(ad.sub(Tensor(np.ones((n, n), dtype=q_final.dtype)), q_final), eps, 1.0))
    per_cell = ad.add(ad.mul(y, log_q), ad.mul(ad.sub(Tensor(np.ones_like(y.data)), y), log_not_q))
    return ad.mul(ad.tsum(ad.mul(per_cell, m)), -1.0 / cells)


def label_loss(
    label_scores: Tensor,
    graph: SemanticGraph,
    mask: np.ndarray,
    role_id: Callable[[str], int],
) -> Tensor:
    """Mean cross-entropy of the role softmax over the gold arcs.

    Gold arcs must be unmasked; an empty gold set contributes zero.
    """
    n, _, n_roles = label_scores.shape
    items = sorted(graph.labels.items())
    if not items:
        return Tensor(np.zeros((), dtype=label_scores.dtype))
    flat = []
    for (head, dep), role in items:
        i, j = head - 1, dep - 1
        if not mask[i, j]:
            raise ValueError(f"gold arc {head}->{dep} lies at a masked cell")
        flat.append((i * n + j) * n_roles + role_id(role))
    log_probs = ad.log_softmax(label_scores, axis=2)
    picked = ad.take_flat(log_probs, np.array(flat, dtype=np.intp))
    return ad.mul(ad.tsum(picked), -1.0 / len(flat))


def final_loss(arc_term: Tensor, label_term: Tensor, balance: float) -> Tensor:
    """Convex combination: balance * arc + (1 - balance) * label."""
    if not 0.0 <= balance <= 1.0:
        raise ValueError("balance must be in [0, 1]")
    return ad.add(ad.mul(arc_term, balance), ad.mul(label_term, 1.0 - balance))


def l2_penalty(params: Mapping[str, Tensor], coeff: float) -> Tensor | None:
    """coeff * sum of squared trainable parameters (gradient 2*coeff*p)."""
    if coeff == 0.0:
        return None
    total = None
    for name in sorted(params):
        p = params[name]
        if not p.requires_grad:
            continue
        sq = ad.tsum(ad.mul(p, p))
        total = sq if total is None else ad.add(total, sq)
    if total is None:
        return None
    return ad.mul(total, coeff)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with optional AMSGrad max-tracking, switchable mid-run."""

    def __init__(self, params: Mapping[str, Tensor], beta1: float = 0.0, beta2: float = 0.95,
                 eps: float = 1e-8, amsgrad: bool = False):
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.amsgrad = amsgrad
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v_max = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def enable_amsgrad(self) -> None:
        # Moments carry over; the max slot starts from the current second
        # moment so the first AMSGrad step is a plain Adam step.
        if not self.amsgrad:
            self.amsgrad = True
            for name, v in self.v.items():
                self.v_max[name] = v.copy()

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params):
            p = self.params[name]
            if not p.requires_grad:
                continue
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            if self.amsgrad:
                np.maximum(self.v_max[name], self.v[name], out=self.v_max[name])
                denom = np.sqrt(self.v_max[name] / bc2) + self.eps
            else:
                denom = np.sqrt(self.v[name] / bc2) + self.eps
            p.data -= lr * (self.m[name] / bc1) / denom


def clip_global_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    total = 0.0
    for name in sorted(params):
        g = params[name].grad
        if g is not None:
            total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for name in sorted(params):
            g = params[name].grad
            if g is not None:
                params[name].grad = g * scale
    return norm


# ---------------------------------------------------------------------------
# batching


def make_batches(token_counts: Sequence[int], batch_tokens: int) -> list[list[int]]:
    """Length-bucketed batches holding at most ``batch_tokens`` tokens
    (every batch gets at least one sentence)."""
    order = sorted(range(len(token_counts)), key=lambda i: (token_counts[i], i))
    batches: list[list[int]] = []
    current: list[int] = []
    used = 0
    for idx in order:
        n = token_counts[idx]
        if current and used + n > batch_tokens:
            batches.append(current)
            current, used = [], 0
        current.append(idx)
        used += n
    if current:
        batches.append(current)
    return batches


def _stream_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *label.encode("utf-8")]))


# ---------------------------------------------------------------------------
# generic two-phase loop


def _run_loop(
    params: Mapping[str, Tensor],
    batches: list[list[int]],
    loss_step: Callable[[list[int], np.random.Generator], tuple[Tensor, dict]],
    evaluate: Callable[[], tuple[float, float, float]],
    config: TrainConfig,
    seed: int,
    log_path=None,
    on_improve: Callable[[int, float], None] | None = None,
    header_extra: dict | None = None,
) -> TrainResult:
    config.validate()
    opt = Adam(params, config.adam_beta1, config.adam_beta2, config.adam_eps)
    shuffle_rng = _stream_rng(seed, "shuffle")
    dropout_rng = _stream_rng(seed, "dropout")

    log: list[dict] = []
    sink = open(log_path, "w", encoding="utf-8") if log_path else None

    def emit(record: dict) -> None:
        log.append(record)
        if sink:
            sink.write(json.dumps(record, sort_keys=True) + "\n")
            sink.flush()

    emit({"event": "start", "seed": seed, "config": asdict(config), **(header_extra or {})})

    step = 0
    best_f1 = -1.0
    best_step = 0
    phase = "adam"
    stop = None
    try:
        while stop is None:
            for b in shuffle_rng.permutation(len(batches)):
                step += 1
                lr = config.lr * config.lr_decay ** (step // config.lr_decay_steps)
                with Tape() as tape:
                    loss, extras = loss_step(batches[int(b)], dropout_rng)
                loss_val = float(loss.data)
                if not np.isfinite(loss_val):
                    raise NumericError(
                        f"training diverged at step {step}: loss={loss_val}, lr={lr}, phase={phase}"
                    )
                zero_grads(params)
                backward(tape, loss)
                grad_norm = clip_global_norm(params, config.clip_norm)
                opt.step(lr)
                emit({"event": "step", "step": step, "phase": phase, "lr": lr,
                      "loss": loss_val, "grad_norm": grad_norm, **extras})

                if step % config.eval_every == 0:
                    p, r, f1 = evaluate()
                    improved = f1 > best_f1
                    if improved:
                        best_f1, best_step = f1, step
                        if on_improve:
                            on_improve(step, f1)
                    emit({"event": "eval", "step": step, "dev_p": p, "dev_r": r,
                          "dev_f1": f1, "best": improved})
                    if config.target_dev_f1 is not None and f1 >= config.target_dev_f1:
                        stop = "target_reached"
                        break
                    stalled = step - best_step
                    if stalled >= config.stop_patience:
                        stop = "early_stop"
                        break
                    if phase == "adam" and stalled >= config.phase_patience:
                        opt.enable_amsgrad()
                        phase = "amsgrad"
                        emit({"event": "phase", "step": step, "phase": phase})
                if step >= config.max_steps:
                    stop = stop or "max_steps"
                    break
        emit({"event": "done", "steps": step, "best_f1": best_f1,
              "best_step": best_step, "reason": stop})
    finally:
        if sink:
            sink.close()
    return TrainResult(best_f1=best_f1, best_step=best_step, steps=step, phase=phase, log=log)


# ---------------------------------------------------------------------------
# SRL model training


def evaluate_model(
    model: SrlModel,
    data: Sequence[tuple[Sentence, SemanticGraph]],
    decode_config: DecodeConfig,
    features: Sequence[np.ndarray] | None = None,
) -> tuple[float, float, float]:
    """Labeled arc P/R/F1 with gold predicate positions."""
    system = []
    for idx, (sentence, _) in enumerate(data):
        feats = features[idx] if features is not None else None
        graph = model.predict(sentence, decode_config, features=feats)
        system.append((sentence, graph))
    result = semantic_f1(data, system, include_senses=False)
    return result.precision, result.recall, result.f1


def train(
    model: SrlModel,
    train_data: Sequence[tuple[Sentence, SemanticGraph]],
    dev_data: Sequence[tuple[Sentence, SemanticGraph]],
    config: TrainConfig,
    decode_config: DecodeConfig,
    seed: int = 0,
    train_features: Sequence[np.ndarray] | None = None,
    dev_features: Sequence[np.ndarray] | None = None,
    log_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Fit the arc/label model; returns the best dev score and full log.

    Gold predicate positions drive the candidate masks during training
    for both pipeline modes (the tagger only enters at inference time).
    """
    if not train_data:
        raise ValueError("empty training corpus")
    if not dev_data:
        raise ValueError("a dev split is required")
    trainable = model.trainable()
    batches = make_batches([len(s) for s, _ in train_data], config.batch_tokens)

    def loss_step(batch: list[int], rng) -> tuple[Tensor, dict]:
        total = None
        arc_total = 0.0
        label_total = 0.0
        for idx in batch:
            sentence, graph = train_data[idx]
            feats = train_features[idx] if train_features is not None else None
            scores = model.score(sentence, features=feats, train=True, rng=rng)
            posterior = mfvi(scores, decode_config)
            la = arc_loss(posterior.final, graph, scores.mask)
            ll = label_loss(scores.label, graph, scores.mask, model.vocab.role_id)
            sentence_loss = final_loss(la, ll, config.balance)
            total = sentence_loss if total is None else ad.add(total, sentence_loss)
            arc_total += float(la.data)
            label_total += float(ll.data)
        loss = ad.mul(total, 1.0 / len(batch))
        penalty = l2_penalty(trainable, config.l2)
        if penalty is not None:
            loss = ad.add(loss, penalty)
        return loss, {
            "arc_loss": arc_total / len(batch),
            "label_loss": label_total / len(batch),
            "sentences": len(batch),
        }

    def evaluate() -> tuple[float, float, float]:
        return evaluate_model(model, dev_data, decode_config, dev_features)

    def on_improve(step: int, f1: float) -> None:
        if checkpoint_path:
            save_model(model, checkpoint_path, extra_meta={"best_step": step, "best_dev_f1": f1})

    return _run_loop(
        trainable, batches, loss_step, evaluate, config, seed,
        log_path=log_path, on_improve=on_improve,
        header_extra={"model": "srl", "parts": list(model.parts)},
    )


# ---------------------------------------------------------------------------
# predicate tagger training


def tagger_f1(tagger: PredicateTagger, data: Sequence[tuple[Sentence, SemanticGraph]]) -> tuple[float, float, float]:
    """(position, sense) P/R/F1 of predicate identification + disambiguation."""
    correct = n_sys = n_gold = 0
    for sentence, _ in data:
        flags, senses = tag_predicates(sentence, tagger)
        sys_items = {(t + 1, senses[t]) for t in np.nonzero(flags)[0]}
        gold_items = {(t.index, t.pred_sense) for t in sentence.tokens if t.is_predicate}
        correct += len(sys_items & gold_items)
        n_sys += len(sys_items)
        n_gold += len(gold_items)
    p = correct / n_sys if n_sys else 0.0
    r = correct / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def train_tagger(
    tagger: PredicateTagger,
    train_data: Sequence[tuple[Sentence, SemanticGraph]],
    dev_data: Sequence[tuple[Sentence, SemanticGraph]],
    config: TrainConfig,
    seed: int = 0,
    log_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Fit the sequence tagger with the same two-phase schedule."""
    if not train_data or not dev_data:
        raise ValueError("tagger training needs non-empty train and dev splits")
    trainable = tagger.trainable()
    batches = make_batches([len(s) for s, _ in train_data], config.batch_tokens)

    def loss_step(batch: list[int], rng) -> tuple[Tensor, dict]:
        total = None
        for idx in batch:
            sentence, _ = train_data[idx]
            logits = tagger.logits(sentence, train=True, rng=rng)
            gold = tagger.gold_class_ids(sentence)
            n, n_classes = logits.shape
            log_probs = ad.log_softmax(logits, axis=1)
            picked = ad.take_flat(log_probs, np.arange(n) * n_classes + gold)
            sentence_loss = ad.mul(ad.tsum(picked), -1.0 / n)
            total = sentence_loss if total is None else ad.add(total, sentence_loss)
        loss = ad.mul(total, 1.0 / len(batch))
        penalty = l2_penalty(trainable, config.l2)
        if penalty is not None:
            loss = ad.add(loss, penalty)
        return loss, {"sentences": len(batch)}

    def evaluate() -> tuple[float, float, float]:
        return tagger_f1(tagger, dev_data)

    def on_improve(step: int, f1: float) -> None:
        if checkpoint_path:
            save_tagger(tagger, checkpoint_path, extra_meta={"best_step": step, "best_dev_f1": f1})

    return _run_loop(
        trainable, batches, loss_step, evaluate, config, seed,
        log_path=log_path, on_improve=on_improve, header_extra={"model": "tagger"},
    )


# ---------------------------------------------------------------------------
# checkpointing


def save_model(model: SrlModel, path, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "srl",
        "vocab": model.vocab.to_json(),
        "encoder": asdict(model.config),
        "parts": list(model.parts),
        "feature_dim": model.encoder.feature_dim,
        "dtype": np.dtype(model.dtype).name,
        "seed": model.seed,
    }
    meta.update(extra_meta or {})
    save_checkpoint(path, model.params, meta)


def load_model(path) -> SrlModel:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "srl":
        raise ValueError(f"{path}: not an SRL model checkpoint")
    vocab = Vocab.from_json(meta["vocab"])
    model = SrlModel(
        vocab,
        EncoderConfig(**meta["encoder"]),
        parts=meta["parts"],
        seed=int(meta.get("seed", 0)),
        dtype=np.dtype(meta["dtype"]),
        feature_dim=meta.get("feature_dim"),
    )
    _restore(model.params, tensors, path)
    return model


def save_tagger(tagger: PredicateTagger, path, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "tagger",
        "vocab": tagger.vocab.to_json(),
        "config": asdict(tagger.config),
        "dtype": np.dtype(tagger.dtype).name,
    }
    meta.update(extra_meta or {})
    save_checkpoint(path, tagger.params, meta)


def load_tagger(path) -> PredicateTagger:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "tagger":
        raise ValueError(f"{path}: not a tagger checkpoint")
    tagger = PredicateTagger(
        Vocab.from_json(meta["vocab"]),
        TaggerConfig(**meta["config"]),
        dtype=np.dtype(meta["dtype"]),
    )
    _restore(tagger.params, tensors, path)
    return tagger


def _restore(params: dict[str, Tensor], tensors: dict[str, np.ndarray], path) -> None:
    missing = set(params) - set(tensors)
    if missing:
        raise ValueError(f"{path}: checkpoint lacks tensors {sorted(missing)}")
    for name, p in params.items():
        arr = tensors[name]
        if arr.shape != p.data.shape:
            raise ValueError(f"{path}: tensor {name} has shape {arr.shape}, expected {p.data.shape}")
        p.data = arr.astype(p.data.dtype)
