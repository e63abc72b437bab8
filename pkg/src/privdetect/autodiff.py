"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded together
with their backward rule. ``tape.backward(loss)`` replays the records in
reverse order and accumulates gradients into every tracked tensor.

Outside a tape, operations are plain numpy computations (inference mode).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericalError(FloatingPointError):
    """A forward value became NaN or infinite."""


class EvaluationError(RuntimeError):
    """A loss function returned a non-finite value during gradient checking."""


_state = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    """A 1-3 dimensional float64 array that may participate in a tape."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


@dataclass
class _Record:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of differentiable operations for one forward pass.

    A tape is owned by a single thread. Use it as a context manager::

        with Tape() as tape:
            loss = model.loss(batch)
        tape.backward(loss)
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, inputs, output, backward) -> None:
        self.records.append(_Record(tuple(inputs), output, backward))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if loss.data.size != 1:
                raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
            seed = np.ones_like(loss.data)
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=np.float64)}
        for rec in reversed(self.records):
            g_out = grads.pop(id(rec.output), None)
            if g_out is None:
                continue
            in_grads = rec.backward(g_out)
            for t, g in zip(rec.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        # whatever remains belongs to leaves (parameters and other inputs)
        leaf_ids = set(grads)
        for rec in self.records:
            for t in rec.inputs:
                if id(t) in leaf_ids and t.requires_grad:
                    g = grads.pop(id(t))
                    leaf_ids.discard(id(t))
                    t.grad = g if t.grad is None else t.grad + g
        if id(loss) in grads and loss.requires_grad:
            loss.grad = grads.pop(id(loss))

    def clear(self) -> None:
        self.records.clear()


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite value produced by {op}")


def _make(data: np.ndarray, inputs: Sequence[Tensor], backward, op: str) -> Tensor:
    _check_finite(data, op)
    track = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        tape = _active_tape()
        if tape is not None:
            tape.record(inputs, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape),
                _unbroadcast(-g * ad / (bd * bd), bd.shape))

    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b) -> Tensor:
    """Matrix product, batched over a leading axis when either side is 3-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2:
        raise DimensionError(f"matmul: left operand must be a matrix, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2 if b.ndim >= 2 else 0]:
        raise DimensionError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        if bd.ndim == 1:
            ga = np.multiply.outer(g, bd)
            gb = np.tensordot(ad, g, axes=(tuple(range(ad.ndim - 1)), tuple(range(g.ndim))))
            return _unbroadcast(ga, ad.shape), gb
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(out, (a, b), backward, "matmul")


def transpose(a) -> Tensor:
    """Swap the last two axes (plain transpose for matrices)."""
    a = as_tensor(a)
    if a.ndim < 2:
        return a
    return _make(np.ascontiguousarray(np.swapaxes(a.data, -1, -2)), (a,),
                 lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat_last(tensors: Sequence) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    lead = ts[0].shape[:-1]
    for t in ts[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(
                f"concat: leading shapes differ: {[t.shape for t in ts]}")
    widths = [t.shape[-1] for t in ts]
    cuts = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=-1))

    return _make(np.concatenate([t.data for t in ts], axis=-1), ts, backward, "concat")


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis)), (a,), backward, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def rowwise_scale(a, w) -> Tensor:
    """Multiply each row ``a[..., i, :]`` by ``w[..., i]`` (``w`` may broadcast)."""
    a, w = as_tensor(a), as_tensor(w)
    try:
        np.broadcast_shapes(w.shape, a.shape[:-1])
    except ValueError:
        raise DimensionError(
            f"rowwise_scale: weights {w.shape} do not match rows of {a.shape}") from None
    ad, wd = a.data, w.data

    def backward(g):
        return (_unbroadcast(g * wd[..., None], ad.shape),
                _unbroadcast((g * ad).sum(axis=-1), wd.shape))

    return _make(ad * wd[..., None], (a, w), backward, "rowwise_scale")


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    d = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * d, (a,), lambda g: (g * d,), "leaky_relu")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _make(out, (a,), lambda g: (g / ad,), "log")


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def softmax_rows(a, mask=None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (broadcastable to ``a``, 1 = keep) gives masked entries a logit of
    minus infinity, so they get probability exactly 0. Every row must keep at
    least one entry.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask) != 0, x.shape)
        x = np.where(keep, x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), backward, "softmax")


def mask_positions(a, mask) -> Tensor:
    """Zero entries where ``mask`` (broadcastable) is 0."""
    a = as_tensor(a)
    keep = np.broadcast_to(np.asarray(mask, dtype=np.float64), a.shape)
    return _make(a.data * keep, (a,), lambda g: (g * keep,), "mask")


def custom(inputs: Sequence[Tensor], data: np.ndarray, backward, op: str) -> Tensor:
    """Register a fused operation with a hand-written backward rule."""
    return _make(data, inputs, backward, op)


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckEntry:
    name: str
    n_checked: int
    max_rel_error: float


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def n_checked(self) -> int:
        return int(np.sum([e.n_checked for e in self.entries]))

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def format(self) -> str:
        lines = [f"{e.name:<32} n={e.n_checked:<5d} max_rel_err={e.max_rel_error:.3e}"
                 for e in self.entries]
        status = "PASS" if self.passed else "FAIL"
        lines.append(f"{status}: {self.n_checked} coordinates, "
                     f"max relative error {self.max_rel_error:.3e} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(1e-8, abs(a) + abs(n))


def grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor] | Iterable[Tensor],
               epsilon: float = 1e-5, tolerance: float = 1e-4,
               max_per_param: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare tape gradients with central finite differences.

    ``loss_fn`` must rebuild the forward pass from the current parameter
    values each call and return a scalar tensor. ``max_per_param`` samples
    that many coordinates per tensor (all of them when ``None``).
    """
    if not isinstance(params, dict):
        params = {p.name or f"param{i}": p for i, p in enumerate(params)}
    rng = rng if rng is not None else np.random.default_rng(0)

    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise EvaluationError("loss is not finite")
    tape.backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    def value() -> float:
        v = loss_fn().data
        if not np.isfinite(v).all():
            raise EvaluationError("loss is not finite under perturbation")
        return float(v)

    entries = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_per_param is None or max_per_param >= n:
            idx = np.arange(n)
        else:
            idx = np.sort(rng.choice(n, size=max_per_param, replace=False))
        worst = 0.0
        a_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = value()
            flat[i] = orig - epsilon
            fm = value()
            flat[i] = orig
            num = (fp - fm) / (2.0 * epsilon)
            worst = max(worst, relative_error(float(a_flat[i]), num))
        entries.append(GradCheckEntry(name, len(idx), worst))
    return GradCheckReport(entries, tolerance)
