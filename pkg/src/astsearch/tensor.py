"""Minimal reverse-mode autodiff over numpy float64 arrays.

Covers exactly the operations the graph encoder and contrastive loss need:
elementwise arithmetic, matmul, activations, reductions, row gather/scatter,
and concatenation. Graphs are built eagerly; Tensor.backward() runs the tape
in reverse topological order. Single-threaded numpy keeps results
bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from astsearch.errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    # -- graph plumbing ---------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple["Tensor", ...], backward_fn) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
        return out

    def _accum(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor; seed defaults to ones."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        if seed is None:
            seed = np.ones_like(self.data)
        self._accum(np.asarray(seed, dtype=np.float64))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _ensure(other)
        out_data = self.data + other.data
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.data.shape))

        return Tensor._make(out_data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accum(-g)

        return Tensor._make(-a.data, (a,), backward)

    def __sub__(self, other):
        return self + (-_ensure(other))

    def __rsub__(self, other):
        return _ensure(other) + (-self)

    def __mul__(self, other):
        other = _ensure(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._make(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other):
        return _ensure(other) / self

    def __matmul__(self, other):
        other = _ensure(other)
        a, b = self, other
        out_data = a.data @ b.data

        def backward(g):
            ad, bd = a.data, b.data
            if a.ndim == 2 and b.ndim == 2:
                if a.requires_grad:
                    a._accum(g @ bd.T)
                if b.requires_grad:
                    b._accum(ad.T @ g)
            elif a.ndim == 2 and b.ndim == 1:
                if a.requires_grad:
                    a._accum(np.outer(g, bd))
                if b.requires_grad:
                    b._accum(ad.T @ g)
            elif a.ndim == 1 and b.ndim == 2:
                if a.requires_grad:
                    a._accum(bd @ g)
                if b.requires_grad:
                    b._accum(np.outer(ad, g))
            elif a.ndim == 1 and b.ndim == 1:
                if a.requires_grad:
                    a._accum(g * bd)
                if b.requires_grad:
                    b._accum(g * ad)
            else:
                raise ShapeError(f"matmul backward unsupported for {ad.shape} @ {bd.shape}")

        return Tensor._make(out_data, (a, b), backward)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        a = self

        def backward(g):
            a._accum(g.T)

        return Tensor._make(a.data.T, (a,), backward)

    def reshape(self, *shape) -> "Tensor":
        a = self
        orig = a.data.shape

        def backward(g):
            a._accum(g.reshape(orig))

        return Tensor._make(a.data.reshape(*shape), (a,), backward)

    # -- activations ----------------------------------------------------------

    def tanh(self) -> "Tensor":
        a = self
        y = np.tanh(a.data)

        def backward(g):
            a._accum(g * (1.0 - y * y))

        return Tensor._make(y, (a,), backward)

    def sigmoid(self) -> "Tensor":
        a = self
        y = 1.0 / (1.0 + np.exp(-a.data))

        def backward(g):
            a._accum(g * y * (1.0 - y))

        return Tensor._make(y, (a,), backward)

    def exp(self) -> "Tensor":
        a = self
        y = np.exp(a.data)

        def backward(g):
            a._accum(g * y)

        return Tensor._make(y, (a,), backward)

    def log(self) -> "Tensor":
        a = self

        def backward(g):
            a._accum(g / a.data)

        return Tensor._make(np.log(a.data), (a,), backward)

    def sqrt(self) -> "Tensor":
        a = self
        y = np.sqrt(a.data)

        def backward(g):
            a._accum(g * 0.5 / y)

        return Tensor._make(y, (a,), backward)

    def maximum(self, floor: float) -> "Tensor":
        """Elementwise max with a constant; gradient flows where data > floor."""
        a = self
        mask = a.data > floor

        def backward(g):
            a._accum(g * mask)

        return Tensor._make(np.maximum(a.data, floor), (a,), backward)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.data.shape).copy())

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def max(self, axis: int | None = None) -> "Tensor":
        """Max reduction; ties route gradient to the first maximizer."""
        a = self
        if axis is None:
            flat_idx = int(np.argmax(a.data))

            def backward(g):
                grad = np.zeros_like(a.data)
                grad.flat[flat_idx] = g
                a._accum(grad)

            return Tensor._make(a.data.max(), (a,), backward)
        arg = np.argmax(a.data, axis=axis)

        def backward_axis(g):
            grad = np.zeros_like(a.data)
            if axis == 0:
                grad[arg, np.arange(a.data.shape[1])] = g
            elif axis == 1:
                grad[np.arange(a.data.shape[0]), arg] = g
            else:
                raise ShapeError(f"max backward unsupported for axis {axis}")
            a._accum(grad)

        return Tensor._make(a.data.max(axis=axis), (a,), backward_axis)

    def logsumexp(self, axis: int) -> "Tensor":
        a = self
        m = a.data.max(axis=axis, keepdims=True)
        shifted = np.exp(a.data - m)
        total = shifted.sum(axis=axis, keepdims=True)
        softmax = shifted / total
        out = np.squeeze(m + np.log(total), axis=axis)

        def backward(g):
            a._accum(np.expand_dims(g, axis) * softmax)

        return Tensor._make(out, (a,), backward)


def _ensure(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                slicer = [slice(None)] * g.ndim
                slicer[axis] = slice(lo, hi)
                t._accum(g[tuple(slicer)])

    return Tensor._make(out_data, tuple(tensors), backward)


def gather_rows(t: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by index; duplicate indices accumulate gradient."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        grad = np.zeros_like(t.data)
        np.add.at(grad, idx, g)
        t._accum(grad)

    return Tensor._make(t.data[idx], (t,), backward)


def segment_sum(t: Tensor, idx: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of t into segments given per-row segment ids."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = np.zeros((num_segments,) + t.data.shape[1:], dtype=np.float64)
    np.add.at(out_data, idx, t.data)

    def backward(g):
        t._accum(g[idx])

    return Tensor._make(out_data, (t,), backward)


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack 1-D tensors into a matrix (one per row)."""
    return concat([t.reshape(1, -1) for t in tensors], axis=0)


def l2_normalize(t: Tensor) -> Tensor:
    """Row-wise (2-D) or whole-vector (1-D) L2 normalization on the tape."""
    if t.ndim == 1:
        return t / (t * t).sum().sqrt()
    return t / (t * t).sum(axis=1, keepdims=True).sqrt()
