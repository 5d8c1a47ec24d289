"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough operations for an encoder-decoder transformer: matmul,
masked softmax, layer norm, GeLU, embedding lookup, cross entropy.
Everything runs in float64 so finite-difference gradient checks are
decisive. All ops are deterministic: identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

GELU_C = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf, which the contract forbids."""


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


class FullyMaskedError(ValueError):
    """A softmax row had no unmasked position."""


class Tensor:
    """N-dimensional float64 value, optionally tracked for backprop."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable | None = None
        self._backward_done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("operation produced a non-finite value")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _result(out, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _result(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _result(out, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * c

    def bw(g):
        return (g * c,)

    return _result(out, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _result(out, (a, b), bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(a.data.shape),)

    return _result(out, (a,), bw)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    inverse = np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inverse),)

    return _result(out, (a,), bw)


def tensor_sum(a: Tensor) -> Tensor:
    out = a.data.sum()

    def bw(g):
        return (np.full(a.data.shape, g, dtype=np.float64),)

    return _result(np.asarray(out), (a,), bw)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup table[ids]; gradient scatters back into the table."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding id out of range for table of {table.shape[0]} rows")
    out = table.data[ids]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _result(out, (table,), bw)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis; positions where mask is False get exactly 0.

    The row max is taken over unmasked entries only, so values at masked
    positions cannot influence the output even at the bit level.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not mask.any(axis=-1).all():
        raise FullyMaskedError("softmax row with every position masked")
    shifted = np.where(mask, x.data, -np.inf)
    rowmax = shifted.max(axis=-1, keepdims=True)
    expo = np.where(mask, np.exp(shifted - rowmax), 0.0)
    y = expo / expo.sum(axis=-1, keepdims=True)

    def bw(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return _result(y, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data
    d = x.shape[-1]

    def bw(g):
        ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        gbias = g.reshape(-1, d).sum(axis=0)
        gg = g * gain.data
        gx = inv * (gg - gg.mean(axis=-1, keepdims=True)
                    - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias

    return _result(out, (x, gain, bias), bw)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GeLU: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    u = GELU_C * (x.data + GELU_CUBIC * x.data ** 3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def bw(g):
        du = GELU_C * (1.0 + 3.0 * GELU_CUBIC * x.data ** 2)
        dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du
        return (g * dx,)

    return _result(out, (x,), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    out = x.data * keep

    def bw(g):
        return (g * keep,)

    return _result(out, (x,), bw)


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_id: int) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_id."""
    targets = np.asarray(targets)
    valid = targets != ignore_id
    if not valid.any():
        raise ValueError("cross_entropy: every position is ignored")
    vocab = logits.shape[-1]
    if targets[valid].min() < 0 or targets[valid].max() >= vocab:
        raise ShapeError(f"target id out of range for vocab of {vocab}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    safe = np.where(valid, targets, 0)
    picked = np.take_along_axis(z, safe[..., None], axis=-1)[..., 0]
    nll = np.where(valid, lse - picked, 0.0)
    n = int(valid.sum())
    out = np.asarray(nll.sum() / n)

    def bw(g):
        p = np.exp(z - lse[..., None])
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        gl = (p - onehot) * valid[..., None] * (float(g) / n)
        return (gl,)

    return _result(out, (logits,), bw)


def backward(loss: Tensor) -> None:
    """Populate .grad with dloss/dtensor for every requires_grad tensor."""
    if loss.data.ndim != 0:
        raise GraphError(f"backward needs a scalar, got shape {loss.shape}")
    if loss._backward_done:
        raise GraphError("backward already ran for this graph; rebuild the loss first")
    loss._backward_done = True

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward_fn is None:
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic grad of f at x and central differences."""
    xt = Tensor(x.data.copy(), requires_grad=True)
    backward(f(xt))
    analytic = xt.grad.reshape(-1).copy()

    probe = Tensor(x.data.copy())
    flat = probe.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = float(f(probe).data)
        flat[i] = orig - h
        minus = float(f(probe).data)
        flat[i] = orig
        numeric[i] = (plus - minus) / (2.0 * h)
    return float(_relative_error(analytic, numeric).max())


def grad_check_params(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                      h: float = 1e-5, max_evals: int | None = None,
                      seed: int = 0) -> float:
    """Gradient check over many parameter tensors at once.

    When max_evals caps the work, coordinates are subsampled with at least
    two probes per tensor so every parameter gets covered.
    """
    zero_grad(params)
    backward(loss_fn())
    analytic = [p.grad.reshape(-1).copy() for p in params]

    total = sum(p.data.size for p in params)
    rng = np.random.default_rng(seed)
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        worst = 0.0
        for p, a in zip(params, analytic):
            size = p.data.size
            if max_evals is None or max_evals >= total:
                idxs = np.arange(size)
            else:
                k = min(size, max(2, int(round(max_evals * size / total))))
                idxs = rng.choice(size, size=k, replace=False)
            flat = p.data.reshape(-1)
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + h
                plus = float(loss_fn().data)
                flat[i] = orig - h
                minus = float(loss_fn().data)
                flat[i] = orig
                numeric = (plus - minus) / (2.0 * h)
                worst = max(worst, float(_relative_error(a[i], numeric)))
        return worst
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag
