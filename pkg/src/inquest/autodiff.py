"""Dense float64 tensors with reverse-mode automatic differentiation.

Tensors wrap row-major numpy arrays. Gradients are tracked by recording
operations on an explicit tape (define-by-run): ops executed inside a
``with Tape() as tape:`` block are appended in execution order, so a single
reverse sweep in ``tape.backward`` is automatically topological. Outside a
tape, ops run as plain forward numpy with no recording, which is the fast
path used for sampled rollouts.

The op set is deliberately small: exactly what a belief-tracked question
generator needs (2-d matmul, restricted-broadcast elementwise ops,
saturating activations, row-grouped softmax, a fused LSTM cell, negative
log-likelihood). Custom differentiable ops can be registered with
:func:`record`, which is how the model layer adds its attention kernels.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit as _expit


class ShapeError(ValueError):
    """Operand shapes do not fit the operation."""


class GradError(RuntimeError):
    """Backward-pass misuse (non-scalar root, missing gradient, ...)."""


class Tensor:
    """A dense float64 array plus optional gradient buffer.

    Tensors are immutable by convention once created (training updates go
    through the optimizers, which mutate ``data`` in place between tapes).
    ``grad`` is populated for graph leaves by ``Tape.backward`` and has the
    same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Operator sugar; all arithmetic funnels through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True)


class _TapeRecord:
    __slots__ = ("inputs", "outputs", "backward")

    def __init__(self, inputs, outputs, backward):
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


_LOCAL = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad():
    """Suspend recording on the current thread (ops run forward-only)."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tape:
    """Ordered record of differentiable operations.

    One tape belongs to one thread; concurrent games each build their own.
    Records are appended in forward execution order, so every node's inputs
    precede it and the reverse sweep visits each node exactly once.
    """

    def __init__(self):
        self.records: list[_TapeRecord] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise RuntimeError("tape stack corrupted")

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad leaf reachable from loss.

        Repeated calls without clearing grads accumulate fresh dloss/dleaf
        into the existing buffers. Intermediate gradients live only inside
        this sweep.
        """
        if loss.data.shape != ():
            raise GradError(
                f"backward root must be a scalar, got shape {loss.data.shape}"
            )
        produced = set()
        for rec in self.records:
            for out in rec.outputs:
                produced.add(id(out))
        # Accumulation never mutates in place: backward rules may hand back
        # the upstream gradient itself (identity paths), so buffers can be
        # shared between nodes until the final leaf copy.
        flowing: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for rec in reversed(self.records):
            out_grads = tuple(flowing.get(id(out)) for out in rec.outputs)
            if all(g is None for g in out_grads):
                continue
            in_grads = rec.backward(out_grads)
            for tens, g in zip(rec.inputs, in_grads):
                if g is None or not tens.requires_grad:
                    continue
                key = id(tens)
                held = flowing.get(key)
                flowing[key] = g if held is None else held + g
        for rec in self.records:
            for tens in rec.inputs:
                key = id(tens)
                if tens.requires_grad and key not in produced and key in flowing:
                    g = flowing.pop(key)
                    if tens.grad is None:
                        tens.grad = np.array(g, dtype=np.float64)
                    else:
                        tens.grad = tens.grad + g


def record(
    inputs: Sequence[Tensor],
    outputs: Sequence[Tensor],
    backward: Callable[[tuple], tuple],
) -> None:
    """Register a custom differentiable op on the active tape.

    ``backward`` receives one gradient (or None) per output and must return
    one gradient (or None) per input. Nothing is recorded outside a tape or
    when no input tracks gradients.
    """
    tape = active_tape()
    if tape is None:
        return
    if not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape.records.append(_TapeRecord(tuple(inputs), tuple(outputs), backward))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_operand(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, (int, float)):
        return Tensor(np.float64(value))
    raise TypeError(f"cannot use {type(value).__name__} as a tensor operand")


def _check_elementwise(a: Tensor, b: Tensor) -> None:
    """Allow equal shapes, scalars, row vectors and column vectors only."""
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or sb == () or sa == ():
        return
    if len(sa) == 2:
        if sb == (sa[1],) or sb == (1, sa[1]) or sb == (sa[0], 1):
            return
    raise ShapeError(f"elementwise shapes {sa} and {sb} do not align")


def add(a, b) -> Tensor:
    a, b = _as_operand(a), _as_operand(b)
    _check_elementwise(a, b)
    out = Tensor(a.data + b.data)

    def backward(gs):
        (g,) = gs
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    record((a, b), (out,), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_operand(a), _as_operand(b)
    _check_elementwise(a, b)
    out = Tensor(a.data - b.data)

    def backward(gs):
        (g,) = gs
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    record((a, b), (out,), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_operand(a), _as_operand(b)
    _check_elementwise(a, b)
    out = Tensor(a.data * b.data)

    def backward(gs):
        (g,) = gs
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    record((a, b), (out,), backward)
    return out


def div(a, b) -> Tensor:
    """Elementwise division; the caller guards against zero denominators."""
    a, b = _as_operand(a), _as_operand(b)
    _check_elementwise(a, b)
    out = Tensor(a.data / b.data)

    def backward(gs):
        (g,) = gs
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    record((a, b), (out,), backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul needs (p,q)x(q,r) matrices, got {a.data.shape} and {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def backward(gs):
        (g,) = gs
        return g @ b.data.T, a.data.T @ g

    record((a, b), (out,), backward)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got shape {a.data.shape}")
    out = Tensor(a.data.T)

    def backward(gs):
        (g,) = gs
        return (g.T,)

    record((a,), (out,), backward)
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(gs):
        (g,) = gs
        return (g.reshape(a.data.shape),)

    record((a,), (out,), backward)
    return out


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(gs):
        (g,) = gs
        return tuple(np.split(g, splits, axis=axis))

    record(tuple(parts), (out,), backward)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())

    def backward(gs):
        (g,) = gs
        return (np.broadcast_to(g, a.data.shape),)

    record((a,), (out,), backward)
    return out


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(gs):
        (g,) = gs
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    record((a,), (out,), backward)
    return out


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); gradient passes only where a exceeded the floor."""
    out = Tensor(np.maximum(a.data, floor))
    mask = a.data > floor

    def backward(gs):
        (g,) = gs
        return (g * mask,)

    record((a,), (out,), backward)
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))

    def backward(gs):
        (g,) = gs
        return (g * (1.0 - out.data * out.data),)

    record((a,), (out,), backward)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # expit is overflow-safe for any finite input
    return _expit(x)


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(_sigmoid(a.data))

    def backward(gs):
        (g,) = gs
        return (g * out.data * (1.0 - out.data),)

    record((a,), (out,), backward)
    return out


def swish(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = _sigmoid(a.data)
    out = Tensor(a.data * s)

    def backward(gs):
        (g,) = gs
        return (g * (s + a.data * s * (1.0 - s)),)

    record((a,), (out,), backward)
    return out


def _softmax_data(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.ndim == 0 or not (-a.data.ndim <= axis < a.data.ndim):
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.data.shape}")
    out = Tensor(_softmax_data(a.data, axis))

    def backward(gs):
        (g,) = gs
        y = out.data
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    record((a,), (out,), backward)
    return out


def softmax_groups(a: Tensor, group_size: int) -> Tensor:
    """Softmax over consecutive row groups, independently per column.

    ``a`` has shape (B*group_size, C); each column of each group of
    ``group_size`` rows is normalized to sum to 1. With a single group this
    is a per-column softmax over rows.
    """
    rows, cols = a.data.shape
    if group_size < 1 or rows % group_size:
        raise ShapeError(f"{rows} rows not divisible into groups of {group_size}")
    blocks = a.data.reshape(-1, group_size, cols)
    y = _softmax_data(blocks, axis=1)
    out = Tensor(y.reshape(rows, cols))

    def backward(gs):
        (g,) = gs
        gb = g.reshape(-1, group_size, cols)
        gr = y * (gb - (gb * y).sum(axis=1, keepdims=True))
        return (gr.reshape(rows, cols),)

    record((a,), (out,), backward)
    return out


def repeat_rows(a: Tensor, times: int) -> Tensor:
    """Repeat each row ``times`` consecutive times: (B,k) -> (B*times,k)."""
    if a.data.ndim != 2:
        raise ShapeError(f"repeat_rows needs a matrix, got shape {a.data.shape}")
    out = Tensor(np.repeat(a.data, times, axis=0))
    rows, cols = a.data.shape

    def backward(gs):
        (g,) = gs
        return (g.reshape(rows, times, cols).sum(axis=1),)

    record((a,), (out,), backward)
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Select rows of an embedding table by integer id."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding ids must be a flat index array, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding id out of range 0..{table.data.shape[0] - 1}"
        )
    out = Tensor(table.data[ids])

    def backward(gs):
        (g,) = gs
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    record((table,), (out,), backward)
    return out


def nll_rows(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-row -log softmax(logits)[target], shape (B,) -> (B,1)."""
    targets = np.asarray(targets, dtype=np.int64)
    rows, vocab = logits.data.shape
    if targets.shape != (rows,):
        raise ShapeError(f"targets shape {targets.shape} != ({rows},)")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(f"target index out of range 0..{vocab - 1}")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    z = e.sum(axis=1)
    lse = m[:, 0] + np.log(z)
    picked = x[np.arange(rows), targets]
    out = Tensor((lse - picked).reshape(rows, 1))

    def backward(gs):
        (g,) = gs
        soft = e / z.reshape(rows, 1)
        soft[np.arange(rows), targets] -= 1.0
        return (soft * g.reshape(rows, 1),)

    record((logits,), (out,), backward)
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single logit vector."""
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects a vector, got {logits.data.shape}")
    as_row = reshape(logits, (1, logits.data.shape[0]))
    loss = nll_rows(as_row, np.array([target]))
    return reshape(loss, ())


def lstm_cell(
    x: Tensor,
    h: Tensor,
    c: Tensor,
    w_x: Tensor,
    w_h: Tensor,
    bias: Tensor,
    z_extra: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """One fused LSTM step over a batch of rows.

    Shapes: x (B,d_in), h and c (B,H), w_x (d_in,4H), w_h (H,4H), bias (4H,).
    Gate layout along the 4H axis is [input, forget, output, candidate], so
    the three sigmoid gates occupy one contiguous block.

    ``z_extra`` (B,4H) is an optional precomputed addition to the gate
    pre-activations; a decoder whose visual context is constant within a
    question projects it once per round instead of once per token.
    """
    bsz, d_in = x.data.shape
    hid = h.data.shape[1]
    if (
        h.data.shape != (bsz, hid)
        or c.data.shape != (bsz, hid)
        or w_x.data.shape != (d_in, 4 * hid)
        or w_h.data.shape != (hid, 4 * hid)
        or bias.data.shape != (4 * hid,)
        or (z_extra is not None and z_extra.data.shape != (bsz, 4 * hid))
    ):
        raise ShapeError(
            "lstm_cell shapes inconsistent: "
            f"x{x.data.shape} h{h.data.shape} c{c.data.shape} "
            f"w_x{w_x.data.shape} w_h{w_h.data.shape} b{bias.data.shape}"
        )
    z = x.data @ w_x.data
    z += h.data @ w_h.data
    z += bias.data
    if z_extra is not None:
        z += z_extra.data
    sig = _sigmoid(z[:, : 3 * hid])
    gi = sig[:, :hid]
    gf = sig[:, hid : 2 * hid]
    go = sig[:, 2 * hid :]
    gc = np.tanh(z[:, 3 * hid :])
    c2_data = gf * c.data + gi * gc
    tc2 = np.tanh(c2_data)
    h2 = Tensor(go * tc2)
    c2 = Tensor(c2_data)

    def backward(gs):
        gh, gcell = gs
        d_c2 = gh * go * (1.0 - tc2 * tc2) if gh is not None else None
        if gcell is not None:
            d_c2 = gcell if d_c2 is None else d_c2 + gcell
        if d_c2 is None:
            d_c2 = np.zeros_like(c2.data)
        dz = np.empty_like(z)
        dz[:, :hid] = (d_c2 * gc) * gi * (1.0 - gi)
        dz[:, hid : 2 * hid] = (d_c2 * c.data) * gf * (1.0 - gf)
        if gh is not None:
            dz[:, 2 * hid : 3 * hid] = (gh * tc2) * go * (1.0 - go)
        else:
            dz[:, 2 * hid : 3 * hid] = 0.0
        dz[:, 3 * hid :] = (d_c2 * gi) * (1.0 - gc * gc)
        grads = [
            dz @ w_x.data.T,
            dz @ w_h.data.T,
            d_c2 * gf,
            x.data.T @ dz,
            h.data.T @ dz,
            dz.sum(axis=0),
        ]
        if z_extra is not None:
            grads.append(dz)
        return tuple(grads)

    inputs = (x, h, c, w_x, w_h, bias) if z_extra is None else (
        x, h, c, w_x, w_h, bias, z_extra
    )
    record(inputs, (h2, c2), backward)
    return h2, c2


def affine(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """x @ w + bias in one recorded op."""
    if (
        x.data.ndim != 2
        or w.data.ndim != 2
        or x.data.shape[1] != w.data.shape[0]
        or bias.data.shape != (w.data.shape[1],)
    ):
        raise ShapeError(
            f"affine shapes do not fit: x{x.data.shape} w{w.data.shape} b{bias.data.shape}"
        )
    z = x.data @ w.data
    z += bias.data
    out = Tensor(z)

    def backward(gs):
        (g,) = gs
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    record((x, w, bias), (out,), backward)
    return out


def add_scaled(acc: Tensor, x: Tensor, scale: np.ndarray) -> Tensor:
    """acc + x * scale for a constant column/matrix scale, one recorded op."""
    out = Tensor(acc.data + x.data * scale)

    def backward(gs):
        (g,) = gs
        return g, _unbroadcast(g * scale, x.data.shape)

    record((acc, x), (out,), backward)
    return out
