"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation builds a node in an implicit computation graph; node ids
are assigned at creation time, so creation order is already a topological
order (inputs always precede consumers). `backward` replays that order in
reverse, accumulating gradients with `+=` so that tensors feeding several
consumers sum their contributions.

All arithmetic is 64-bit: the finite-difference oracle in `grad_check`
needs the headroom, and desk-scale models do not need the speed.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ContractError, EmptyPoolError, NumericError, ShapeError

_NODE_IDS = itertools.count()

# Softmax mask bias: large enough that exp underflows to exactly 0.0 after
# max-subtraction, finite so tensors never hold inf.
MASK_BIAS = -1e30

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


class Tensor:
    """N-d float64 array with an optional gradient buffer.

    Leaf tensors are created directly; op results carry a backward closure
    and references to their parents. `grad` is allocated lazily on the
    first accumulation and has the same shape as `data`.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_NODE_IDS)
        self.op = op
        self.parents = tuple(parents)
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    """Lift plain arrays/scalars to constant (untracked) tensors."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting in the forward."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(data, op, parents) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, op=op, parents=parents if req else ())


class ComputationGraph:
    """Nodes reachable from one output, sorted by creation id (topological)."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "ComputationGraph":
        seen = {id(root)}
        stack = [root]
        nodes = [root]
        while stack:
            t = stack.pop()
            for p in t.parents:
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)
                    nodes.append(p)
        nodes.sort(key=lambda t: t.node_id)
        return cls(nodes)

    def backward(self, root: Tensor):
        # Reset op-node grads so re-running one graph does not compound
        # intermediate state; leaf grads persist and accumulate by design.
        for t in self.nodes:
            if t._backward is not None:
                t.grad = None
        root.grad = np.ones_like(root.data)
        for t in reversed(self.nodes):
            if t._backward is not None and t.grad is not None:
                t._backward()


def backward(loss: Tensor):
    """Fill gradient buffers of every tracked tensor the loss depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    ComputationGraph.trace(loss).backward(loss)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def assert_all_finite(named, context=""):
    """Raise NumericError naming the first non-finite entry in (name, array) pairs."""
    for name, arr in named:
        if arr is None:
            continue
        a = arr.data if isinstance(arr, Tensor) else arr
        if not np.all(np.isfinite(a)):
            where = f" during {context}" if context else ""
            raise NumericError(f"non-finite values in {name!r}{where}")


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data + b.data, "add", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data - b.data, "sub", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(-g, b.data.shape))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data * b.data, "mul", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))
        out._backward = _bw
    return out


def matmul(a, b) -> Tensor:
    """Matrix product; stacked (batched) operands follow numpy matmul rules.

    Gradients: dA = dC @ B^T, dB = A^T @ dC (transpose on the last two axes).
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}")
    out = _node(a.data @ b.data, "matmul", (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))
        out._backward = _bw
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    out = _node(t, "tanh", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, out.grad * (1.0 - t * t))
        out._backward = _bw
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Piecewise form keeps exp from overflowing for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    out = _node(s, "sigmoid", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, out.grad * s * (1.0 - s))
        out._backward = _bw
    return out


def gelu(x) -> Tensor:
    """Tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    x = as_tensor(x)
    v = x.data
    u = _GELU_C * (v + _GELU_A * v ** 3)
    t = np.tanh(u)
    out = _node(0.5 * v * (1.0 + t), "gelu", (x,))
    if out.requires_grad:
        def _bw():
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * v ** 2)
            dydx = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du
            _accum(x, out.grad * dydx)
        out._backward = _bw
    return out


def softmax(x, axis=-1) -> Tensor:
    """Max-subtracted softmax along `axis`; rows sum to 1."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.data.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = _node(p, "softmax", (x,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            dot = (g * p).sum(axis=axis, keepdims=True)
            _accum(x, p * (g - dot))
        out._backward = _bw
    return out


def layer_norm(x, gain, bias, eps=1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must match last dim {d}, "
            f"got {gain.data.shape} and {bias.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _node(gain.data * xhat + bias.data, "layer_norm", (x, gain, bias))
    if out.requires_grad:
        def _bw():
            g = out.grad
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))
            _accum(gain, _unbroadcast(g * xhat, gain.data.shape))
            _accum(bias, _unbroadcast(g, bias.data.shape))
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# indexing / shaping


def embedding(table, ids) -> Tensor:
    """Gather rows of a (V, d) table by an integer id array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= table.data.shape[0]):
        raise ShapeError(f"embedding ids out of range [0, {table.data.shape[0]})")
    out = _node(table.data[ids], "embedding", (table,))
    if out.requires_grad:
        def _bw():
            g = out.grad.reshape(-1, table.data.shape[1])
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids.reshape(-1), g)
        out._backward = _bw
    return out


def gather_rows(x, idx) -> Tensor:
    """Select rows of a 2-d tensor; gradient scatter-adds back."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = _node(x.data[idx], "gather_rows", (x,))
    if out.requires_grad:
        def _bw():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, idx, out.grad)
        out._backward = _bw
    return out


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = _node(x.data.reshape(shape), "reshape", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, out.grad.reshape(x.data.shape))
        out._backward = _bw
    return out


def swap_axes(x, a, b) -> Tensor:
    x = as_tensor(x)
    out = _node(np.swapaxes(x.data, a, b), "swap_axes", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, np.swapaxes(out.grad, a, b))
        out._backward = _bw
    return out


def concat(parts, axis=-1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = _node(np.concatenate([p.data for p in parts], axis=axis), "concat", tuple(parts))
    if out.requires_grad:
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]
        def _bw():
            for p, g in zip(parts, np.split(out.grad, splits, axis=axis)):
                _accum(p, g)
        out._backward = _bw
    return out


def slice_last(x, start, stop) -> Tensor:
    """View of x[..., start:stop] with gradient scattered into the slice."""
    x = as_tensor(x)
    out = _node(x.data[..., start:stop], "slice_last", (x,))
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(x.data)
            g[..., start:stop] = out.grad
            _accum(x, g)
        out._backward = _bw
    return out


def time_slice(x, t) -> Tensor:
    """x[:, t, :] for a (B, T, d) tensor -> (B, d)."""
    x = as_tensor(x)
    out = _node(x.data[:, t, :], "time_slice", (x,))
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(x.data)
            g[:, t, :] = out.grad
            _accum(x, g)
        out._backward = _bw
    return out


def stack_time(steps) -> Tensor:
    """Stack a list of (B, d) tensors into (B, T, d)."""
    steps = [as_tensor(s) for s in steps]
    out = _node(np.stack([s.data for s in steps], axis=1), "stack_time", tuple(steps))
    if out.requires_grad:
        def _bw():
            for t, s in enumerate(steps):
                _accum(s, out.grad[:, t, :])
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# pooling / losses


def max_over_time(x, mask) -> Tensor:
    """Per-feature max over unmasked time steps.

    Accepts (T, d) with mask (T,) or (B, T, d) with mask (B, T). Gradient
    routes 1 to each argmax position, first index on ties; masked positions
    never receive gradient.
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    squeeze = x.ndim == 2
    data = x.data[None] if squeeze else x.data
    m = mask[None] if squeeze else mask
    if m.shape != data.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} does not match input {x.data.shape}")
    if not m.any(axis=1).all():
        raise EmptyPoolError("max_over_time: a sequence has every position masked")
    neg = np.where(m[:, :, None], data, -np.inf)
    am = neg.argmax(axis=1)                              # (B, d)
    pooled = np.take_along_axis(data, am[:, None, :], axis=1)[:, 0, :]
    out_data = pooled[0] if squeeze else pooled
    out = _node(out_data, "max_over_time", (x,))
    if out.requires_grad:
        def _bw():
            g = out.grad[None] if squeeze else out.grad
            gx = np.zeros_like(data)
            np.put_along_axis(gx, am[:, None, :], g[:, None, :], axis=1)
            _accum(x, gx[0] if squeeze else gx)
        out._backward = _bw
    return out


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-softmax of the target class over a (B, C) batch."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (B, C) logits, got {logits.data.shape}")
    n, c = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} does not match batch {n}")
    if np.any(targets < 0) or np.any(targets >= c):
        raise ShapeError(f"target labels must lie in [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    nll = -(z[np.arange(n), targets] - np.log(e.sum(axis=1)))
    out = _node(np.float64(nll.mean()), "cross_entropy", (logits,))
    if out.requires_grad:
        def _bw():
            d = p.copy()
            d[np.arange(n), targets] -= 1.0
            _accum(logits, float(out.grad) * d / n)
        out._backward = _bw
    return out


def mse_loss(pred, gold) -> Tensor:
    """Mean squared difference between two same-length tensors."""
    pred, gold = as_tensor(pred), as_tensor(gold)
    if pred.data.shape != gold.data.shape:
        raise ShapeError(f"mse_loss length mismatch: {pred.data.shape} vs {gold.data.shape}")
    diff = pred.data - gold.data
    out = _node(np.float64((diff ** 2).mean()), "mse_loss", (pred, gold))
    if out.requires_grad:
        def _bw():
            g = float(out.grad) * 2.0 * diff / diff.size
            _accum(pred, g)
            _accum(gold, -g)
        out._backward = _bw
    return out


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    out = _node(np.float64(x.data.mean()), "mean_all", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, np.full_like(x.data, float(out.grad) / x.data.size))
        out._backward = _bw
    return out


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    out = _node(np.float64(x.data.sum()), "sum_all", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, np.full_like(x.data, float(out.grad)))
        out._backward = _bw
    return out


def dropout(x, rate, rng) -> Tensor:
    """Inverted dropout; identity when rate is 0. Callers disable it in eval."""
    x = as_tensor(x)
    if rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = _node(x.data * keep, "dropout", (x,))
    if out.requires_grad:
        def _bw():
            _accum(x, out.grad * keep)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(build, tensors, h=1e-5, max_coords=None, rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    `build` must rebuild the scalar loss from the current `.data` of the
    given tensors (deterministically: dropout off). Relative error per
    coordinate is |a - n| / max(1e-8, |a| + |n|). When `max_coords` is set,
    that many coordinates per tensor are checked (seeded sample) instead of
    all of them.
    """
    zero_grads(tensors)
    loss = build()
    backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(build().data)
            flat[i] = orig - h
            fm = float(build().data)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            ana = aflat[i]
            rel = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, rel)
    return worst
