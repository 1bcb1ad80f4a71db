"""Minimal dense-tensor kernel with reverse-mode differentiation.

Double-precision numpy arrays wrapped in a tape of closures. The op set is
exactly what the scoring network needs: linear maps, bias addition, tanh,
sigmoid, elementwise square, masked softmax, row gathers, reductions, and
binary cross-entropy. Broadcasting is limited to the cases used here
(a trailing-axis bias vector and scalars); anything else raises.
"""

from __future__ import annotations

import numpy as np

CLAMP = 1e-7


class Tensor:
    """A node in the backward tape. ``data`` is always float64."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Single reverse sweep; gradients accumulate additively on fan-out."""
        if self.data.shape != ():
            raise ValueError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unary(x: Tensor, out_data, vjp) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x._accum(vjp(g))

    return Tensor(out_data, _parents=(x,), _backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: (..., m, k) @ (k, n) with shared weights, or a batched
    (B, m, k) @ (B, k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul expects >= 2-d operands")
    if b.data.ndim == 2:
        if a.data.shape[-1] != b.data.shape[0]:
            raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    elif a.data.shape[:-2] != b.data.shape[:-2] or a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                k, n = b.data.shape
                a2 = a.data.reshape(-1, k)
                g2 = g.reshape(-1, n)
                b._accum(a2.T @ g2)
            else:
                b._accum(np.swapaxes(a.data, -1, -2) @ g)

    return Tensor(out, _parents=(a, b), _backward=backward)


def _is_scalar(t: Tensor) -> bool:
    return t.data.shape == ()


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; also covers trailing-axis bias and scalar addition."""
    a, b = as_tensor(a), as_tensor(b)
    bias = (b.data.ndim == 1 and a.data.ndim > 1
            and a.data.shape[-1] == b.data.shape[0])
    if not (a.data.shape == b.data.shape or bias or _is_scalar(b) or _is_scalar(a)):
        raise ValueError(f"add shape mismatch {a.shape} + {b.shape}")
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g if not _is_scalar(a) else g.sum())
        if b.requires_grad:
            if b.data.shape == g.shape:
                b._accum(g)
            elif _is_scalar(b):
                b._accum(g.sum())
            else:
                b._accum(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return Tensor(out, _parents=(a, b), _backward=backward)


def sub(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not (a.data.shape == b.data.shape or _is_scalar(b) or _is_scalar(a)):
        raise ValueError(f"sub shape mismatch {a.shape} - {b.shape}")
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g if not _is_scalar(a) else g.sum())
        if b.requires_grad:
            b._accum(-g if not _is_scalar(b) else -g.sum())

    return Tensor(out, _parents=(a, b), _backward=backward)


def mul(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not (a.data.shape == b.data.shape or _is_scalar(b) or _is_scalar(a)):
        raise ValueError(f"mul shape mismatch {a.shape} * {b.shape}")
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            ga = g * b.data
            a._accum(ga if not _is_scalar(a) else ga.sum())
        if b.requires_grad:
            gb = g * a.data
            b._accum(gb if not _is_scalar(b) else gb.sum())

    return Tensor(out, _parents=(a, b), _backward=backward)


def square(x: Tensor) -> Tensor:
    """Elementwise (Hadamard) square."""
    x = as_tensor(x)
    return _unary(x, x.data * x.data, lambda g: 2.0 * x.data * g)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _unary(x, y, lambda g: (1.0 - y * y) * g)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _unary(x, y, lambda g: y * (1.0 - y) * g)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    return _unary(x, x.data.reshape(shape),
                  lambda g: g.reshape(x.data.shape))


def transpose_last2(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.swapaxes(x.data, -1, -2),
                  lambda g: np.swapaxes(g, -1, -2))


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p._accum(g[tuple(idx)])

    return Tensor(out, _parents=tuple(parts), _backward=backward)


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows of a 2-d tensor; duplicate indices accumulate on backward."""
    x = as_tensor(x)
    idx = np.asarray(idx)
    out = x.data[idx]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx.reshape(-1), g.reshape(-1, x.data.shape[-1]))
            x._accum(gx)

    return Tensor(out, _parents=(x,), _backward=backward)


def masked_softmax(logits: Tensor, mask, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` where entries with ``mask`` True get probability 0.

    Raises if any slice along the axis is fully masked.
    """
    logits = as_tensor(logits)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.data.shape)
    keep = ~mask
    if not keep.any(axis=axis).all():
        raise ValueError("masked_softmax: a slice has all entries masked")
    neg = np.where(keep, logits.data, -np.inf)
    mx = neg.max(axis=axis, keepdims=True)
    e = np.exp(neg - mx)
    e = np.where(keep, e, 0.0)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if logits.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            logits._accum(y * (g - inner))

    return Tensor(y, _parents=(logits,), _backward=backward)


def mean(x: Tensor, axis=None) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis)
    if axis is None:
        count = x.data.size

        def backward(g):
            if x.requires_grad:
                x._accum(np.full_like(x.data, g / count))
    else:
        count = x.data.shape[axis]

        def backward(g):
            if x.requires_grad:
                x._accum(np.expand_dims(g, axis) / count
                         * np.ones_like(x.data))

    return Tensor(out, _parents=(x,), _backward=backward)


def sum_(x: Tensor, axis=None) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis)

    def backward(g):
        if x.requires_grad:
            if axis is None:
                x._accum(np.full_like(x.data, g))
            else:
                x._accum(np.expand_dims(g, axis) * np.ones_like(x.data))

    return Tensor(out, _parents=(x,), _backward=backward)


def amin(x: Tensor, axis: int = -1) -> Tensor:
    """Minimum along an axis; the subgradient flows to the first minimizer."""
    x = as_tensor(x)
    out = x.data.min(axis=axis)
    arg = np.expand_dims(x.data.argmin(axis=axis), axis)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
            x._accum(gx)

    return Tensor(out, _parents=(x,), _backward=backward)


def bce_loss(p: Tensor, y, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy of probabilities against {0,1} labels.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; the clamp also zeroes the
    gradient outside that band.
    """
    p = as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != p.data.shape:
        raise ValueError(f"bce shape mismatch {p.shape} vs {y.shape}")
    pc = np.clip(p.data, CLAMP, 1.0 - CLAMP)
    terms = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    total = terms.sum()
    count = max(y.size, 1)
    out = total / count if reduction == "mean" else total

    def backward(g):
        if p.requires_grad:
            inside = (p.data > CLAMP) & (p.data < 1.0 - CLAMP)
            gp = (pc - y) / (pc * (1.0 - pc)) * inside
            if reduction == "mean":
                gp = gp / count
            p._accum(gp * g)

    return Tensor(out, _parents=(p,), _backward=backward)


def finite_diff_check(make_loss, params: list[Tensor], eps: float = 1e-5) -> float:
    """Central-difference check of the reverse sweep.

    ``make_loss`` rebuilds the scalar loss from the current parameter data.
    Returns the max relative error over every coordinate of every parameter,
    with denominator max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params:
        p.grad = None
    loss = make_loss()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.ravel()
        gflat = ga.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(make_loss().data)
            flat[i] = orig - eps
            fm = float(make_loss().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
