"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Value`` wraps a numpy array together with a provenance record (parent
values and a vector-Jacobian callback), forming an acyclic graph that
``backward`` traverses in reverse topological order.  The op set is small
on purpose: just enough to express sinusoidal encodings, fully connected
field networks, depth sorting, and quadrature compositing, all in 64-bit
precision.

Graphs are built and differentiated on a single thread.  Several threads
may build independent graphs concurrently as long as they only read shared
leaf data (e.g. network parameters during rendering).
"""

from __future__ import annotations

import numpy as np


class Value:
    """Node in the autodiff graph: an array plus how it was produced.

    ``grad`` is lazily allocated and always matches ``data`` in shape.
    Leaf values (parameters, constants) have no parents.  ``needs_grad``
    prunes the backward pass: constants (see :func:`constant`) and
    anything computed only from constants receive no gradient work.
    """

    __slots__ = ("data", "grad", "op", "needs_grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), op="leaf", vjp=None, needs_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self._parents = tuple(parents)
        self._vjp = vjp
        if needs_grad is None:
            needs_grad = (any(p.needs_grad for p in self._parents)
                          if self._parents else True)
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def detach(self):
        """Copy of the data with no graph attached."""
        return self.data.copy()

    def __repr__(self):
        return f"Value(op={self.op!r}, shape={self.data.shape})"

    # Arithmetic sugar used by network code; all routed through the op
    # functions below so every path shares one backward rule.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(as_value(other)))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_value(x):
    """Wrap arrays/scalars as constant leaves; pass Values through."""
    return x if isinstance(x, Value) else Value(x)


def constant(x):
    """Constant leaf: excluded from gradient propagation entirely."""
    return Value(x, needs_grad=False)


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(
            f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible"
        ) from None


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_value(a), as_value(b)
    _check_broadcast("add", a, b)

    def vjp(g):
        return (_unbroadcast(g, a.shape) if a.needs_grad else None,
                _unbroadcast(g, b.shape) if b.needs_grad else None)

    return Value(a.data + b.data, (a, b), "add", vjp)


def mul(a, b):
    a, b = as_value(a), as_value(b)
    _check_broadcast("mul", a, b)

    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape) if a.needs_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.needs_grad else None)

    return Value(a.data * b.data, (a, b), "mul", vjp)


def neg(a):
    a = as_value(a)
    return Value(-a.data, (a,), "neg", lambda g: (-g,))


def matmul(a, b):
    a, b = as_value(a), as_value(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} x {b.shape}")

    def vjp(g):
        if a.ndim == 2 and b.ndim == 2:
            return (g @ b.data.T if a.needs_grad else None,
                    a.data.T @ g if b.needs_grad else None)
        if a.ndim == 2 and b.ndim == 1:
            return (np.outer(g, b.data) if a.needs_grad else None,
                    a.data.T @ g if b.needs_grad else None)
        # a.ndim == 1, b.ndim == 2
        return (b.data @ g if a.needs_grad else None,
                np.outer(a.data, g) if b.needs_grad else None)

    return Value(a.data @ b.data, (a, b), "matmul", vjp)


def concat(values, axis=-1):
    values = [as_value(v) for v in values]
    ref = values[0].ndim
    if any(v.ndim != ref for v in values):
        raise ValueError(
            "concat: rank mismatch " + " vs ".join(str(v.shape) for v in values)
        )
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(np.ascontiguousarray(p) if v.needs_grad else None
                     for v, p in zip(values, pieces))

    return Value(
        np.concatenate([v.data for v in values], axis=axis), values, "concat", vjp
    )


def reshape(a, shape):
    a = as_value(a)
    return Value(
        a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(a.shape),)
    )


def relu(a):
    a = as_value(a)
    return Value(np.maximum(a.data, 0.0), (a,), "relu",
                 lambda g: (g * (a.data > 0.0),))


def sigmoid(a):
    a = as_value(a)
    z = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Value(out, (a,), "sigmoid", vjp)


def exp(a):
    a = as_value(a)
    out = np.exp(a.data)
    return Value(out, (a,), "exp", lambda g: (g * out,))


def absolute(a):
    """|x| with subgradient 0 at exactly 0."""
    a = as_value(a)
    return Value(np.abs(a.data), (a,), "abs", lambda g: (g * np.sign(a.data),))


def square(a):
    a = as_value(a)
    return Value(a.data * a.data, (a,), "square", lambda g: (g * (2.0 * a.data),))


def sin(a):
    a = as_value(a)
    return Value(np.sin(a.data), (a,), "sin", lambda g: (g * np.cos(a.data),))


def cos(a):
    a = as_value(a)
    return Value(np.cos(a.data), (a,), "cos", lambda g: (-g * np.sin(a.data),))


def reduce_sum(a, axis=None):
    a = as_value(a)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Value(a.data.sum(axis=axis), (a,), "sum", vjp)


def reduce_mean(a, axis=None):
    a = as_value(a)
    n = a.size if axis is None else a.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy(),)

    return Value(a.data.mean(axis=axis), (a,), "mean", vjp)


def gather(a, indices, axis=-1):
    """take_along_axis; scatter-adds gradients back to the taken slots."""
    a = as_value(a)
    indices = np.asarray(indices)

    def vjp(g):
        out = np.zeros(a.shape)
        ix = list(np.indices(g.shape, sparse=True))
        ix[axis if axis >= 0 else g.ndim + axis] = indices
        np.add.at(out, tuple(ix), g)
        return (out,)

    return Value(np.take_along_axis(a.data, indices, axis=axis), (a,), "gather", vjp)


def sort_by_key(keys, values, axis=-1):
    """Sort ``values`` by detached ``keys``.

    The permutation is treated as locally constant: gradients route back
    through the inverse permutation, so the sum of output gradients equals
    the sum of input gradients.
    """
    key_data = keys.data if isinstance(keys, Value) else np.asarray(keys)
    perm = np.argsort(key_data, axis=axis, kind="stable")
    return gather(values, perm, axis=axis)


_OPS = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "concat": concat,
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "neg": neg,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "abs": absolute,
    "square": square,
    "sin": sin,
    "cos": cos,
    "gather": gather,
    "sort-by-key-passthrough": sort_by_key,
    "reshape": reshape,
}


def forward_op(op_kind, *inputs, **kwargs):
    """Apply a registered op by name; shape errors name the op."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ValueError(
            f"unknown op {op_kind!r}; valid ops: {sorted(_OPS)}"
        ) from None
    return fn(*inputs, **kwargs)


def custom_op(name, out_data, parents, vjp):
    """Build a Value for a fused op (used by the kernel-backed layers)."""
    return Value(out_data, parents, name, vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _toposort(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root):
    """Populate grads of everything reachable from a scalar-shaped root.

    Each call propagates a fresh seed of ones and adds into any grads
    already present, so repeated calls accumulate.  Subgraphs that cannot
    need gradients (descendants of constants only) are skipped.
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar-shaped, got {root.shape}")
    order = _toposort(root)
    pending = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.needs_grad:
                continue
            prev = pending.get(id(parent))
            pending[id(parent)] = pg if prev is None else prev + pg


def zero_grad(values):
    for v in values:
        v.grad = None


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


def _relative_error(a, n):
    scale = max(abs(a), abs(n))
    if scale < 1e-6:
        return abs(a - n)
    return abs(a - n) / scale


def grad_check(loss_fn, named_params, h=1e-5):
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` rebuilds and returns the scalar loss Value from the current
    parameter data; ``named_params`` is a sequence of (name, Value) leaves.
    Every parameter entry is perturbed by ±h, so the cost is O(P) loss
    evaluations.  Returns a dict of per-parameter max relative errors plus
    an ``"overall"`` entry.  Report-only: never raises on large errors.
    """
    params = list(named_params)
    zero_grad(v for _, v in params)
    backward(loss_fn())
    analytic = {name: v.grad.copy() for name, v in params}

    report = {}
    worst = 0.0
    for name, v in params:
        flat = v.data.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = float(loss_fn().data)
            flat[i] = keep - h
            lo = float(loss_fn().data)
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * h)
            err = max(err, _relative_error(analytic[name].reshape(-1)[i], numeric))
        report[name] = err
        worst = max(worst, err)
    report["overall"] = worst
    return report
