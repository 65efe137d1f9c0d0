"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records its parents and a backward closure on the tensor itself,
so the tape is just the DAG of live tensors. Gradients accumulate across
multiple consumers of the same tensor. All math is 64-bit; no broadcasting
beyond what the model needs (row-vector bias/weight against a matrix).
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

_NODE_IDS = itertools.count()


class ShapeMismatchError(ValueError):
    pass


class Tensor:
    """A dense float64 array, optionally tracked for differentiation.

    `grad` is populated (same shape as `data`) by `backward()` on every
    tensor with requires_grad=True reachable from the loss.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id = next(_NODE_IDS)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def backward(self) -> None:
        backward(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, neg(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    # never mutate an existing grad array in place: other tensors may alias it
    t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Populate grads of all requires_grad ancestors of a scalar loss."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if node.node_id in visited:
            continue
        visited.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.node_id not in visited:
                stack.append((p, False))
    loss.grad = np.ones(())
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def bw(out):
        def run():
            g = out.grad
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        return run

    return _make(data, (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape == b.data.shape:
        def bw(out):
            def run():
                _accum(a, out.grad)
                _accum(b, out.grad)
            return run
        return _make(a.data + b.data, (a, b), bw)
    # bias broadcast: (m, n) + (n,)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        def bw(out):
            def run():
                _accum(a, out.grad)
                _accum(b, out.grad.sum(axis=0))
            return run
        return _make(a.data + b.data, (a, b), bw)
    raise ShapeMismatchError(f"add shapes incompatible: {a.data.shape} + {b.data.shape}")


def neg(a: Tensor) -> Tensor:
    def bw(out):
        def run():
            _accum(a, -out.grad)
        return run
    return _make(-a.data, (a,), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape == b.data.shape:
        def bw(out):
            def run():
                _accum(a, out.grad * b.data)
                _accum(b, out.grad * a.data)
            return run
        return _make(a.data * b.data, (a, b), bw)
    # row broadcast: (m, n) * (n,)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        def bw(out):
            def run():
                _accum(a, out.grad * b.data)
                _accum(b, (out.grad * a.data).sum(axis=0))
            return run
        return _make(a.data * b.data, (a, b), bw)
    raise ShapeMismatchError(f"mul shapes incompatible: {a.data.shape} * {b.data.shape}")


def scale(a: Tensor, c: float) -> Tensor:
    def bw(out):
        def run():
            _accum(a, out.grad * c)
        return run
    return _make(a.data * c, (a,), bw)


def mul_mask(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant {0,1} mask; gradient is zero at masked entries."""
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != a.data.shape:
        raise ShapeMismatchError(f"mask shape {m.shape} != tensor shape {a.data.shape}")

    def bw(out):
        def run():
            _accum(a, out.grad * m)
        return run

    return _make(a.data * m, (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(out):
        def run():
            _accum(a, np.full(a.data.shape, float(out.grad)))
        return run
    return _make(np.asarray(a.data.sum()), (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    def bw(out):
        def run():
            _accum(a, np.full(a.data.shape, float(out.grad) / n))
        return run
    return _make(np.asarray(a.data.mean()), (a,), bw)


def mean_rows(a: Tensor) -> Tensor:
    """Mean over axis 0 of a (m, n) tensor, keeping shape (1, n)."""
    if a.data.ndim != 2 or a.data.shape[0] == 0:
        raise ShapeMismatchError(f"mean_rows needs a non-empty 2-D tensor, got {a.data.shape}")
    m = a.data.shape[0]
    def bw(out):
        def run():
            _accum(a, np.repeat(out.grad, m, axis=0) / m)
        return run
    return _make(a.data.mean(axis=0, keepdims=True), (a,), bw)


def transpose(a: Tensor) -> Tensor:
    def bw(out):
        def run():
            _accum(a, out.grad.T)
        return run
    return _make(a.data.T, (a,), bw)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_rows needs at least one tensor")
    sizes = [p.data.shape[0] for p in parts]
    def bw(out):
        def run():
            offset = 0
            for p, s in zip(parts, sizes):
                _accum(p, out.grad[offset:offset + s])
                offset += s
        return run
    return _make(np.concatenate([p.data for p in parts], axis=0), parts, bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_cols needs at least one tensor")
    sizes = [p.data.shape[1] for p in parts]
    def bw(out):
        def run():
            offset = 0
            for p, s in zip(parts, sizes):
                _accum(p, out.grad[:, offset:offset + s])
                offset += s
        return run
    return _make(np.concatenate([p.data for p in parts], axis=1), parts, bw)


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatchError("gather_rows indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"gather_rows index out of range for {a.data.shape[0]} rows")

    def bw(out):
        def run():
            g = np.zeros_like(a.data)
            np.add.at(g, idx, out.grad)
            _accum(a, g)
        return run

    return _make(a.data[idx], (a,), bw)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(out):
        def run():
            g = np.zeros_like(a.data)
            g[start:stop] = out.grad
            _accum(a, g)
        return run
    return _make(a.data[start:stop].copy(), (a,), bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(out):
        def run():
            g = np.zeros_like(a.data)
            g[:, start:stop] = out.grad
            _accum(a, g)
        return run
    return _make(a.data[:, start:stop].copy(), (a,), bw)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction; rejects NaN input."""
    if np.isnan(x.data).any():
        raise ValueError("softmax_rows: NaN in input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(out):
        def run():
            g = out.grad
            dot = (g * y).sum(axis=-1, keepdims=True)
            _accum(x, y * (g - dot))
        return run

    return _make(y, (x,), bw)


def masked_softmax_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the positions where mask==1, zeros elsewhere.

    Rows whose mask is all zero yield an all-zero row.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != x.data.shape:
        raise ShapeMismatchError(f"mask shape {m.shape} != input shape {x.data.shape}")
    if np.isnan(x.data[m]).any():
        raise ValueError("masked_softmax_rows: NaN in unmasked input")
    neg_inf = np.where(m, x.data, -np.inf)
    rowmax = neg_inf.max(axis=-1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    e = np.exp(np.where(m, x.data - rowmax, -np.inf))
    e = np.where(m, e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def bw(out):
        def run():
            g = out.grad
            dot = (g * y).sum(axis=-1, keepdims=True)
            _accum(x, y * (g - dot))
        return run

    return _make(y, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    factor = np.where(x.data > 0, 1.0, slope)

    def bw(out):
        def run():
            _accum(x, out.grad * factor)
        return run

    return _make(x.data * factor, (x,), bw)


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def bw(out):
        def run():
            _accum(x, out.grad * pos)
        return run

    return _make(np.where(pos, x.data, 0.0), (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(out):
        def run():
            _accum(x, out.grad * (1.0 - y * y))
        return run

    return _make(y, (x,), bw)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "tanh": tanh,
    "identity": lambda t: t,
}


def row_normalize(x: Tensor, tiny: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; rows with norm <= tiny stay zero
    and receive zero gradient."""
    norms = np.linalg.norm(x.data, axis=1, keepdims=True)
    zero = norms <= tiny
    safe = np.where(zero, 1.0, norms)
    y = np.where(zero, 0.0, x.data / safe)

    def bw(out):
        def run():
            g = out.grad
            dot = (g * y).sum(axis=1, keepdims=True)
            gx = (g - y * dot) / safe
            _accum(x, np.where(zero, 0.0, gx))
        return run

    return _make(y, (x,), bw)


def set_diag_one(x: Tensor) -> Tensor:
    """Force the diagonal of a square matrix to exactly 1 (constant: no
    gradient flows through diagonal entries)."""
    n, m = x.data.shape
    if n != m:
        raise ShapeMismatchError(f"set_diag_one needs a square matrix, got {x.data.shape}")
    y = x.data.copy()
    np.fill_diagonal(y, 1.0)

    def bw(out):
        def run():
            g = out.grad.copy()
            np.fill_diagonal(g, 0.0)
            _accum(x, g)
        return run

    return _make(y, (x,), bw)


def cross_entropy_from_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax of the true class, log-sum-exp stabilized."""
    lab = np.asarray(labels, dtype=np.int64)
    m, c = logits.data.shape
    if lab.shape != (m,):
        raise ShapeMismatchError(f"labels shape {lab.shape} != ({m},)")
    for i, v in enumerate(lab):
        if v < 0 or v >= c:
            raise ValueError(f"label {v} out of range [0, {c}) at row {i}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + logits.data.max(axis=1, keepdims=True)
    picked = logits.data[np.arange(m), lab]
    loss = float((lse.ravel() - picked).mean())

    def bw(out):
        def run():
            p = np.exp(logits.data - lse)
            p[np.arange(m), lab] -= 1.0
            _accum(logits, p * (float(out.grad) / m))
        return run

    return _make(np.asarray(loss), (logits,), bw)


def dropout(x: Tensor, rate: float, training: bool, rng_seed: int) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate) at training time,
    exact identity in eval mode."""
    if rate >= 1.0 or rate < 0.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(rng_seed)
    keep = rng.random(x.data.shape) >= rate
    factor = keep / (1.0 - rate)

    def bw(out):
        def run():
            _accum(x, out.grad * factor)
        return run

    return _make(x.data * factor, (x,), bw)
