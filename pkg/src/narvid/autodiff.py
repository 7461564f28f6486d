"""Minimal dense-tensor arithmetic with reverse-mode differentiation.

Tensors wrap float64 numpy arrays. Every op validates that its output is
finite and, when gradients are enabled, records a vector-Jacobian closure
so `backward` on a scalar loss can accumulate gradients into every
requires_grad tensor it reaches. Ops are deliberately small and double
precision throughout: the test suite leans on tight finite-difference
agreement, not speed.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from .errors import NumericError, ShapeError, UsageError

_GRAD_ENABLED = True

_GELU_A = math.sqrt(2.0 / math.pi)
_GELU_B = 0.044715

COSINE_EPS = 1e-8


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr):
    # one-pass probe: a non-finite entry makes the sum non-finite (values in
    # this engine are O(1..1e3), so finite sums cannot overflow)
    if not math.isfinite(float(arr.sum())):
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite value produced (NaN or Inf)")
    return arr


class Tensor:
    """A float64 array plus optional gradient bookkeeping.

    `grad` accumulates across backward calls; callers reset it (set to
    None) between optimizer steps. Tensors without grad state are
    immutable by convention and safe to share.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        if type(data) is np.ndarray and data.dtype == np.float64:
            arr = data
        else:
            arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self):
        if self.data.size != 1:
            raise UsageError("item() requires a scalar tensor")
        return float(self.data.reshape(()))

    # -- graph construction -------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(node) into .grad for all reachable nodes.

        self must be scalar. Repeated calls without resetting .grad add up.
        """
        if self.data.size != 1:
            raise UsageError("backward requires a scalar loss")
        topo = []
        visited = set()
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
                if id(p) not in visited:
                    stack.append((p, False))
        flows = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad = node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in flows:
                    flows[key] = flows[key] + pg
                else:
                    flows[key] = pg

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjp):
    """Build an op result; records the graph only when needed."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g, shape):
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise and linear ops ----------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data
    return _node(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data
    return _node(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data
    return _node(data, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                          _unbroadcast(g * a.data, b.data.shape)))


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = _check_finite(a.data / b.data)

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _node(data, (a, b), vjp)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul expects tensors with at least 2 dims")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    if a.data.shape[:-2] != b.data.shape[:-2]:
        raise ShapeError("matmul batch dims must match exactly")
    data = a.data @ b.data

    def vjp(g):
        return (g @ np.swapaxes(b.data, -1, -2),
                np.swapaxes(a.data, -1, -2) @ g)

    return _node(data, (a, b), vjp)


def transpose(t, axes=None):
    t = _as_tensor(t)
    if axes is None:
        axes = tuple(reversed(range(t.data.ndim)))
    inv = np.argsort(axes)
    return _node(np.transpose(t.data, axes), (t,),
                 lambda g: (np.transpose(g, inv),))


def reshape(t, shape):
    t = _as_tensor(t)
    old = t.data.shape
    return _node(t.data.reshape(shape), (t,), lambda g: (g.reshape(old),))


def take_rows(t, indices):
    """Gather rows along axis 0; backward scatter-adds (duplicates ok)."""
    t = _as_tensor(t)
    idx = np.asarray(indices, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(t.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(t.data[idx], (t,), vjp)


def diagonal(t):
    t = _as_tensor(t)
    if t.data.ndim != 2 or t.data.shape[0] != t.data.shape[1]:
        raise ShapeError("diagonal expects a square matrix")
    n = t.data.shape[0]

    def vjp(g):
        out = np.zeros_like(t.data)
        out[np.arange(n), np.arange(n)] = g
        return (out,)

    return _node(np.diagonal(t.data).copy(), (t,), vjp)


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _node(data, tensors, vjp)


def tsum(t, axis=None, keepdims=False):
    t = _as_tensor(t)
    data = t.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, t.data.shape).copy(),)

    return _node(data, (t,), vjp)


def tmean(t, axis=None, keepdims=False):
    t = _as_tensor(t)
    n = t.data.size if axis is None else t.data.shape[axis]
    return mul(tsum(t, axis=axis, keepdims=keepdims), _as_tensor(1.0 / n))


def tmax(t, axis):
    """Max along `axis`; gradient goes to the first argmax (numpy tie rule)."""
    t = _as_tensor(t)
    data = t.data.max(axis=axis)
    arg = t.data.argmax(axis=axis)

    def vjp(g):
        out = np.zeros_like(t.data)
        idx = list(np.indices(data.shape))
        idx.insert(axis if axis >= 0 else t.data.ndim + axis, arg)
        out[tuple(idx)] = g
        return (out,)

    return _node(data, (t,), vjp)


def exp(t):
    t = _as_tensor(t)
    data = _check_finite(np.exp(t.data))
    return _node(data, (t,), lambda g: (g * data,))


def log(t):
    t = _as_tensor(t)
    data = _check_finite(np.log(t.data))
    return _node(data, (t,), lambda g: (g / t.data,))


def sqrt(t):
    t = _as_tensor(t)
    data = _check_finite(np.sqrt(t.data))
    return _node(data, (t,), lambda g: (g * 0.5 / data,))


def relu(t):
    t = _as_tensor(t)
    mask = t.data > 0
    return _node(np.where(mask, t.data, 0.0), (t,), lambda g: (g * mask,))


def gelu(t):
    """tanh-approximation GELU (smooth, so finite differences stay clean)."""
    t = _as_tensor(t)
    x = t.data
    inner = _GELU_A * (x + _GELU_B * x ** 3)
    th = np.tanh(inner)
    data = 0.5 * x * (1.0 + th)

    def vjp(g):
        d_inner = _GELU_A * (1.0 + 3.0 * _GELU_B * x ** 2)
        local = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * d_inner
        return (g * local,)

    return _node(data, (t,), vjp)


# -- fused numerical kernels ---------------------------------------------------


def softmax_temp(t, tau=1.0, axis=-1):
    """softmax(x / tau) along `axis`, max-shifted before the division.

    Subtracting the max first keeps the op overflow-safe and makes the
    selection shift-invariance exact whenever x + c is exact.
    """
    t = _as_tensor(t)
    if tau <= 0:
        raise NumericError(f"temperature must be positive, got {tau}")
    shifted = (t.data - t.data.max(axis=axis, keepdims=True)) / tau
    e = np.exp(shifted)
    probs = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * probs).sum(axis=axis, keepdims=True)
        return ((g - dot) * probs / tau,)

    return _node(probs, (t,), vjp)


def logsumexp(t, axis=-1, keepdims=False):
    t = _as_tensor(t)
    m = t.data.max(axis=axis, keepdims=True)
    e = np.exp(t.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = m + np.log(s)
    soft = e / s
    if not keepdims:
        data = data.squeeze(axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _node(data, (t,), vjp)


def layer_norm(t, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    t, gain, bias = _as_tensor(t), _as_tensor(gain), _as_tensor(bias)
    x = t.data
    n = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def vjp(g):
        dxhat = g * gain.data
        dvar = (dxhat * xc).sum(axis=-1, keepdims=True) * (-0.5) * inv ** 3
        dmu = (-dxhat * inv).sum(axis=-1, keepdims=True) \
            + dvar * (-2.0 * xc).mean(axis=-1, keepdims=True)
        dx = dxhat * inv + dvar * 2.0 * xc / n + dmu / n
        reduce_axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=reduce_axes)
        dbias = g.sum(axis=reduce_axes)
        return dx, dgain, dbias

    return _node(data, (t, gain, bias), vjp)


def normalize_rows(t, eps=COSINE_EPS):
    """Divide each row (last axis) by max(L2 norm, eps); zero rows stay zero."""
    t = _as_tensor(t)
    x = t.data
    norm = np.sqrt((x ** 2).sum(axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    data = x / denom

    def vjp(g):
        guarded = norm <= eps
        gdot = (g * x).sum(axis=-1, keepdims=True)
        dx = g / denom - np.where(guarded, 0.0, gdot * x / denom ** 3)
        return (dx,)

    return _node(data, (t,), vjp)


def cosine(a, b):
    """Cosine similarity of two vectors with an eps norm guard.

    Zero vectors score 0 rather than raising (corrupted rows are expected
    input, not errors).
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeError(
            f"cosine expects equal-length vectors, got {a.data.shape} and {b.data.shape}")
    return tsum(mul(normalize_rows(a), normalize_rows(b)))


def cosine_matrix(a, b):
    """All-pairs cosine: rows of `a` against rows of `b` -> (na, nb)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(
            f"cosine_matrix expects matrices sharing dim, got {a.data.shape} and {b.data.shape}")
    return matmul(normalize_rows(a), transpose(normalize_rows(b)))


# -- attention -----------------------------------------------------------------


def multi_head_attention(queries, keys, values, wq, wk, wv, wo, heads):
    """Scaled dot-product attention, per head, then concat and project.

    queries: (Kq, D); keys/values: (Kk, D); the four projections are D x D.
    """
    from .errors import ConfigError

    queries, keys, values = map(_as_tensor, (queries, keys, values))
    d = queries.data.shape[-1]
    if d % heads != 0:
        raise ConfigError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads

    def split(t):
        kq = t.data.shape[0]
        return transpose(reshape(t, (kq, heads, dh)), (1, 0, 2))

    q = split(matmul(queries, wq))
    k = split(matmul(keys, wk))
    v = split(matmul(values, wv))
    scores = mul(matmul(q, transpose(k, (0, 2, 1))), _as_tensor(1.0 / math.sqrt(dh)))
    weights = softmax_temp(scores, tau=1.0, axis=-1)
    ctx = matmul(weights, v)
    kq = queries.data.shape[0]
    merged = reshape(transpose(ctx, (1, 0, 2)), (kq, d))
    return matmul(merged, wo)


# -- verification harness --------------------------------------------------------


def finite_diff_check(f, params, h=1e-5):
    """Max per-tensor relative error of analytic vs central-difference grads.

    f is a zero-arg callable returning a scalar Tensor; params are the leaf
    tensors to perturb. Relative error per tensor is
    max|a - n| / max(max|a|, max|n|, 1e-6); the floor keeps tensors whose
    true gradient is identically zero from amplifying rounding noise.
    """
    params = list(params)
    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    for p, old in zip(params, saved):
        p.grad = old

    worst = 0.0
    with no_grad():
        for p, ana in zip(params, analytic):
            flat = p.data.reshape(-1)
            num = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f().item()
                flat[i] = orig - h
                fm = f().item()
                flat[i] = orig
                num[i] = (fp - fm) / (2.0 * h)
            num = num.reshape(p.data.shape)
            denom = max(np.abs(ana).max(initial=0.0),
                        np.abs(num).max(initial=0.0), 1e-6)
            worst = max(worst, float(np.abs(ana - num).max(initial=0.0) / denom))
    return worst
