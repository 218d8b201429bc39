"""Reverse-mode automatic differentiation over dense numpy arrays.

Every op is a plain function that consumes and produces :class:`Tensor`
objects. While a :class:`Tape` is active, ops that touch a gradient-tracked
tensor append a record to it; :func:`backward` then replays the records in
reverse execution order exactly once and accumulates gradients into the
``grad`` slot of every ``requires_grad`` tensor. Ops executed without an
active tape just compute values, which is what the finite-difference side
of :func:`gradcheck` relies on.

All math is done in the dtype of the operands (float64 by default,
float32 works throughout for speed); nothing here is threaded, so results
are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


class TapeError(RuntimeError):
    """Misuse of a tape: double backward, backward on a non-scalar, ..."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class Tensor:
    """A dense float array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_track")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._track = self.requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # Operator sugar; everything routes through the module-level ops so
    # that recording stays in one place.
    def __add__(self, other):
        return add(self, _lift(other, self))

    def __radd__(self, other):
        return add(_lift(other, self), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    def __rmul__(self, other):
        return mul(_lift(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other, self))


_Record = tuple[Tensor, tuple[Tensor, ...], Callable[[np.ndarray], tuple]]

_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Execution-ordered record of ops, used once by :func:`backward`."""

    def __init__(self):
        self._records: list[_Record] = []
        self._spent = False

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPES.pop()

    def __len__(self) -> int:
        return len(self._records)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _emit(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out._track = any(t._track for t in inputs)
    if out._track and _ACTIVE_TAPES:
        _ACTIVE_TAPES[-1]._records.append((out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate (callers zero them between steps, see
    :func:`zero_grads`). The tape is consumed: calling backward twice on the
    same tape without re-running the forward pass raises :class:`TapeError`.
    """
    if tape._spent:
        raise TapeError("tape already consumed; rerun the forward pass first")
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape._spent = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, backward_fn in reversed(tape._records):
        g_out = grads.pop(id(out), None)
        if g_out is None:
            continue
        if out.requires_grad:
            out.grad = g_out if out.grad is None else out.grad + g_out
        for tensor, g_in in zip(inputs, backward_fn(g_out)):
            if g_in is None or not tensor._track:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = g_in
                holders[key] = tensor
    for key, tensor in holders.items():
        if tensor.requires_grad and key in grads:
            g = grads[key]
            tensor.grad = g if tensor.grad is None else tensor.grad + g


def zero_grads(params: Iterable[Tensor] | Mapping[str, Tensor]) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for p in values:
        p.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast to produce it."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b, a)
    out = Tensor(a.data + b.data)
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b, a)
    out = Tensor(a.data - b.data)
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b, a)
    out = Tensor(a.data * b.data)
    return _emit(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _emit(out, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))
    return _emit(out, (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * y * (1.0 - y),))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    keep = a.data >= 0
    out = Tensor(np.where(keep, a.data, slope * a.data))
    return _emit(out, (a,), lambda g: (np.where(keep, g, slope * g),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data > lo) & (a.data < hi)
    out = Tensor(np.clip(a.data, lo, hi))
    return _emit(out, (a,), lambda g: (np.where(inside, g, 0.0),))


# ---------------------------------------------------------------------------
# reductions / reshaping


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit(out, (a,), back)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return _emit(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))
    return _emit(out, (a,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(out, tensors, back)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + length}) out of range for axis {axis} of {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(a.data[index])

    def back(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _emit(out, (a,), back)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def back(g):
        ga = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape)
        return (ga, gb)

    return _emit(out, (a, b), back)


def _parse_einsum(subscripts: str, a: Tensor, b: Tensor):
    if "..." in subscripts:
        raise ShapeError(f"einsum: ellipsis not supported in '{subscripts}'")
    lhs, _, out_sub = subscripts.partition("->")
    terms = lhs.split(",")
    if len(terms) != 2 or "->" not in subscripts:
        raise ShapeError(f"einsum: need exactly two operands and an explicit output, got '{subscripts}'")
    a_sub, b_sub = terms
    if len(a_sub) != a.ndim or len(b_sub) != b.ndim:
        raise ShapeError(
            f"einsum '{subscripts}': terms rank ({len(a_sub)}, {len(b_sub)}) vs operands {a.shape}, {b.shape}"
        )
    for term in (a_sub, b_sub, out_sub):
        if len(set(term)) != len(term):
            raise ShapeError(f"einsum '{subscripts}': repeated index within one term is not supported")
    # Gradients are themselves einsums only if no index is summed out of a
    # single operand; every label must be shared or kept in the output.
    for term, other in ((a_sub, b_sub), (b_sub, a_sub)):
        for ch in term:
            if ch not in out_sub and ch not in other:
                raise ShapeError(f"einsum '{subscripts}': index '{ch}' appears in one operand only")
    return a_sub, b_sub, out_sub


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum with an explicit output term."""
    a_sub, b_sub, out_sub = _parse_einsum(subscripts, a, b)
    out = Tensor(np.einsum(subscripts, a.data, b.data))

    def back(g):
        ga = np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, b.data)
        gb = np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, a.data)
        return (ga, gb)

    return _emit(out, (a, b), back)


# ---------------------------------------------------------------------------
# normalizers


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def back(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _emit(out, (a,), back)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y)

    def back(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _emit(out, (a,), back)


# ---------------------------------------------------------------------------
# lookup / selection / noise


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    out = Tensor(table.data[ids])

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _emit(out, (table,), back)


def take_flat(a: Tensor, flat_indices) -> Tensor:
    """Gather entries of the flattened tensor; used to pick scored cells."""
    idx = np.asarray(flat_indices, dtype=np.intp)
    out = Tensor(a.data.ravel()[idx])

    def back(g):
        ga = np.zeros(a.size, dtype=a.dtype)
        np.add.at(ga, idx, g)
        return (ga.reshape(a.shape),)

    return _emit(out, (a,), back)


def dropout(a: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when ``train`` is off or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    return mul(a, Tensor(mask))


def dropout_mask(shape, p: float, train: bool, rng: np.random.Generator | None, dtype=DEFAULT_DTYPE) -> Tensor | None:
    """A reusable inverted-dropout mask, for masks shared across time steps."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return None
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    return Tensor((rng.random(shape) >= p).astype(dtype) / (1.0 - p))


# ---------------------------------------------------------------------------
# recurrent cell


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor):
    """One LSTM step. Gate layout along the last axis is i, f, g, o.

    ``x`` is (batch, in_dim); ``w_ih`` (in_dim, 4*hidden); ``w_hh``
    (hidden, 4*hidden); ``bias`` (4*hidden,). Returns (h, c).
    """
    hidden = w_hh.shape[0]
    if w_ih.shape[1] != 4 * hidden or bias.shape[0] != 4 * hidden:
        raise ShapeError(
            f"lstm_cell: inconsistent gate dims w_ih={w_ih.shape} w_hh={w_hh.shape} bias={bias.shape}"
        )
    gates = add(add(matmul(x, w_ih), matmul(h_prev, w_hh)), bias)
    i_gate = sigmoid(narrow(gates, 1, 0, hidden))
    f_gate = sigmoid(narrow(gates, 1, hidden, hidden))
    g_gate = tanh(narrow(gates, 1, 2 * hidden, hidden))
    o_gate = sigmoid(narrow(gates, 1, 3 * hidden, hidden))
    c = add(mul(f_gate, c_prev), mul(i_gate, g_gate))
    h = mul(o_gate, tanh(c))
    return h, c


# ---------------------------------------------------------------------------
# gradient checking


class GradCheckResult:
    """Outcome of :func:`gradcheck`: the worst relative error and where."""

    def __init__(self, max_rel_error: float, worst_param: str | None, per_param: dict[str, float]):
        self.max_rel_error = max_rel_error
        self.worst_param = worst_param
        self.per_param = per_param

    def __repr__(self) -> str:
        return f"GradCheckResult(max_rel_error={self.max_rel_error:.3e}, worst_param={self.worst_param!r})"


def gradcheck(f: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-5) -> GradCheckResult:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be deterministic (run it with dropout off) and is called
    once per tape-backed analytic pass plus twice per parameter entry for
    the finite differences. The relative error for one entry is
    ``|analytic - central| / max(1, |analytic|, |central|)``; the maximum
    over all entries of all ``requires_grad`` params is returned.
    """
    with Tape() as tape:
        loss = f()
    if loss.data.size != 1:
        raise TapeError(f"gradcheck needs a scalar objective, got shape {loss.shape}")
    if not np.isfinite(loss.data):
        raise NumericError("gradcheck: objective is not finite")
    zero_grads(params)
    backward(tape, loss)

    checked = {name: p for name, p in params.items() if p.requires_grad}
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in checked.items()
    }

    per_param: dict[str, float] = {}
    worst = 0.0
    worst_name: str | None = None
    for name, p in checked.items():
        flat = p.data.ravel()
        flat_analytic = analytic[name].ravel()
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"gradcheck: non-finite objective while perturbing {name}[{i}]")
            central = (up - down) / (2.0 * eps)
            a = float(flat_analytic[i])
            rel = abs(a - central) / max(1.0, abs(a), abs(central))
            if rel > err:
                err = rel
        per_param[name] = err
        if err > worst:
            worst = err
            worst_name = name
    return GradCheckResult(worst, worst_name, per_param)
