"""A small reverse-mode differentiation engine over dense float64 arrays.

Every op builds a :class:`Tensor` that remembers its parents and a closure
mapping the upstream gradient to one gradient per parent.  ``backward``
walks the graph once in reverse topological order.  Leaf tensors created
with ``requires_grad=True`` accumulate (``+=``) into ``.grad``; intermediate
gradients live only for the duration of the call.
"""
from __future__ import annotations

import math

import numpy as np

from .exceptions import NumericError, StructuralError
from .hermite import basis_matrix


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _check(op, data):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {op}", op=op)


def _node(op, data, parents, backward_fn):
    _check(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise StructuralError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# graph traversal


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order[::-1]


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every leaf that requires grad."""
    if loss.data.size != 1:
        raise StructuralError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in _topological(loss):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------------------
# elementary ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _node("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _node("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _node("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise StructuralError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _node("matmul", a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def sum(x, axis=None):
    x = as_tensor(x)

    def grad(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node("sum", np.asarray(x.data.sum(axis=axis)), (x,), grad)


def mean(x):
    x = as_tensor(x)
    n = x.data.size
    return _node("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n),))


def take(x, index):
    x = as_tensor(x)

    def grad(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _node("take", x.data[index], (x,), grad)


def pointwise_unary(x, f, fprime, name="unary"):
    """Apply ``f`` elementwise; ``fprime(x, y)`` gives the derivative."""
    x = as_tensor(x)
    y = f(x.data)
    return _node(name, y, (x,), lambda g: (g * fprime(x.data, y),))


def l2_norm(params):
    """Euclidean norm of all entries of ``params`` taken together."""
    params = [as_tensor(p) for p in params]
    total = math.sqrt(float(np.sum([np.sum(p.data * p.data) for p in params])))

    def grad(g):
        if total == 0.0:
            return tuple(np.zeros_like(p.data) for p in params)
        return tuple(g * p.data / total for p in params)

    return _node("l2_norm", np.asarray(total), tuple(params), grad)


# ---------------------------------------------------------------------------
# activations


def softsign(x):
    return pointwise_unary(x, lambda v: v / (1.0 + np.abs(v)),
                           lambda v, y: 1.0 / (1.0 + np.abs(v)) ** 2, "softsign")


def hermite(x, coefficients):
    """``sum_i c_i h_i(x)`` elementwise, differentiable in ``x`` and ``c``."""
    x, c = as_tensor(x), as_tensor(coefficients)
    if c.ndim != 1:
        raise StructuralError("hermite coefficients must be a vector")
    degree = c.shape[0] - 1
    basis = basis_matrix(x.data, degree)
    with np.errstate(over="ignore", invalid="ignore"):
        out = basis @ c.data

    def grad(g):
        gx = None
        if x.requires_grad:
            # h_n' = sqrt(n) h_{n-1}
            dcoef = c.data[1:] * np.sqrt(np.arange(1, degree + 1))
            gx = g * (basis[..., :degree] @ dcoef) if degree else np.zeros_like(g)
        gc = None
        if c.requires_grad:
            gc = np.tensordot(g, basis, axes=g.ndim)
        return gx, gc

    return _node("hermite", out, (x, c), grad)


# ---------------------------------------------------------------------------
# losses


def log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


def softmax_cross_entropy(logits, target):
    """Mean over rows of ``-sum_k p_k log softmax(z)_k``.

    ``target`` holds one probability row per example (soft targets allowed)
    and may itself require grad.
    """
    z, p = as_tensor(logits), as_tensor(target)
    if z.ndim != 2 or z.shape != p.shape:
        raise StructuralError(f"cross-entropy: logits {z.shape} vs targets {p.shape}")
    if not np.allclose(p.data.sum(axis=1), 1.0, rtol=0.0, atol=1e-6):
        raise StructuralError("cross-entropy targets must have rows summing to 1")
    n = z.shape[0]
    logp = log_softmax(z.data)
    loss = -np.sum(p.data * logp) / n

    def grad(g):
        gz = g * (np.exp(logp) * p.data.sum(axis=1, keepdims=True) - p.data) / n
        gp = -g * logp / n if p.requires_grad else None
        return gz, gp

    return _node("softmax_cross_entropy", np.asarray(loss), (z, p), grad)


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def mean_entropy(p, floor=1e-12):
    """Mean Shannon entropy of the rows of ``p`` (0 log 0 = 0).

    The derivative ``-(log p + 1)`` is evaluated at ``max(p, floor)`` so
    zero entries get a large finite gradient.
    """
    p = as_tensor(p)
    n = p.shape[0]
    safe = np.maximum(p.data, floor)
    value = -np.sum(np.where(p.data > 0, p.data * np.log(safe), 0.0)) / n
    return _node("mean_entropy", np.asarray(value), (p,), lambda g: (-g * (np.log(safe) + 1.0) / n,))


def mse_sum(prediction, target):
    """Squared error summed over features, averaged over rows."""
    y, t = as_tensor(prediction), as_tensor(target)
    if y.shape != t.shape:
        raise StructuralError(f"mse: prediction {y.shape} vs target {t.shape}")
    n = y.shape[0]
    diff = y.data - t.data
    return _node("mse_sum", np.asarray(np.sum(diff * diff) / n), (y, t),
                 lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n))


# ---------------------------------------------------------------------------
# normalization


def feature_normalize(x, scale, shift, running_mean=None, running_var=None,
                      training=True, momentum=0.9, eps=1e-5):
    """Per-feature normalization over the batch axis.

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` (numpy arrays, updated in place) track them as
    ``r <- momentum * r + (1 - momentum) * batch``.  In eval mode the
    running statistics are used.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    if x.ndim != 2 or scale.shape != (x.shape[1],) or shift.shape != (x.shape[1],):
        raise StructuralError(f"feature_normalize: input {x.shape} vs scale {scale.shape}")
    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if running_mean is not None:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mu
            running_var *= momentum
            running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * scale.data + shift.data
    n = x.shape[0]

    def grad(g):
        gscale = np.sum(g * xhat, axis=0)
        gshift = np.sum(g, axis=0)
        gxhat = g * scale.data
        if training:
            gx = inv / n * (n * gxhat - gxhat.sum(axis=0) - xhat * np.sum(gxhat * xhat, axis=0))
        else:
            gx = gxhat * inv
        return gx, gscale, gshift

    return _node("feature_normalize", out, (x, scale, shift), grad)
