"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every function in this module works on plain ``numpy`` arrays as well as on
:class:`Tensor` objects.  When no argument is a ``Tensor`` the result is a
plain array and nothing is recorded, so the same density and divergence code
serves both the closed-form API and the training path.
"""

import contextlib

import numpy as np

_GRAD_ENABLED = True


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An array node in a computation graph.

    Leaves created with ``requires_grad=True`` accumulate ``.grad`` when
    :meth:`backward` is called on a scalar descendant.
    """

    __array_priority__ = 1000.0
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor({self.data!r})"

    def __len__(self):
        return len(self.data)

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return _node(self.data + other.data, (self, other),
                     lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return _node(self.data - other.data, (self, other),
                     lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __mul__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        return _node(x * y, (self, other),
                     lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        out = x / y
        return _node(out, (self, other),
                     lambda g: (_unbroadcast(g / y, x.shape),
                                _unbroadcast(-g * out / y, y.shape)))

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __neg__(self):
        return _node(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, power):
        if isinstance(power, Tensor):
            raise TypeError("only constant exponents are supported")
        x = self.data
        return _node(x ** power, (self,), lambda g: (g * power * x ** (power - 1),))

    def __matmul__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data

        def backward(g):
            gx = g @ np.swapaxes(y, -1, -2) if y.ndim > 1 else np.multiply.outer(g, y)
            gy = np.swapaxes(x, -1, -2) @ g if x.ndim > 1 else np.multiply.outer(x, g)
            return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

        return _node(x @ y, (self, other), backward)

    def __rmatmul__(self, other):
        return _as_tensor(other) @ self

    def __getitem__(self, idx):
        shape = self.shape

        basic = all(isinstance(i, (slice, int, type(Ellipsis)))
                    for i in (idx if isinstance(idx, tuple) else (idx,)))

        def backward(g):
            out = np.zeros(shape)
            if basic:
                out[idx] = g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return _node(self.data[idx], (self,), backward)

    @property
    def T(self):
        return _node(self.data.T, (self,), lambda g: (g.T,))

    def reshape(self, *shape):
        old = self.shape
        return _node(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    # differentiation ------------------------------------------------------

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not _needs_grad(parent):
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _node(data, parents, backward):
    if not _GRAD_ENABLED or not any(_needs_grad(p) for p in parents):
        return Tensor(data)
    out = Tensor(data, parents, backward)
    out.requires_grad = True
    return out


def _needs_grad(t):
    return t.requires_grad


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _any_tensor(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def value(x):
    """The underlying array of ``x`` whether or not it is a Tensor."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def parameter(data):
    """A leaf tensor whose gradient is tracked."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# elementwise and reduction functions (array-or-tensor) -----------------------


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: (g * out,))


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)
    d = x.data
    return _node(np.log(d), (x,), lambda g: (g / d,))


def _softplus(d):
    e = np.exp(-np.abs(d))
    return np.maximum(d, 0.0) + np.log1p(e), e


def softplus(x):
    if not isinstance(x, Tensor):
        return _softplus(np.asarray(x, dtype=np.float64))[0]
    d = x.data
    out, e = _softplus(d)

    def backward(g):
        # sigmoid(d) written in terms of e = exp(-|d|)
        return (g * np.where(d >= 0, 1.0, e) / (1.0 + e),)

    return _node(out, (x,), backward)


def clip(x, lo, hi):
    """Clamp; gradient is zero where the clamp is active."""
    if not isinstance(x, Tensor):
        return np.clip(x, lo, hi)
    d = x.data
    inside = (d >= lo) & (d <= hi)
    return _node(np.clip(d, lo, hi), (x,), lambda g: (g * inside,))


def sum(x, axis=None, keepdims=False):  # noqa: A001
    if not isinstance(x, Tensor):
        return np.sum(x, axis=axis, keepdims=keepdims)
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _node(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    n = np.size(value(x)) if axis is None else np.prod(
        [value(x).shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def log_softmax(x, axis=-1):
    if not isinstance(x, Tensor):
        x = np.asarray(x, dtype=np.float64)
        shifted = x - x.max(axis=axis, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = log_softmax(x.data, axis=axis)
    p = np.exp(out)
    return _node(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def softmax(x, axis=-1):
    return exp(log_softmax(x, axis=axis))


def broadcast_to(x, shape):
    if not isinstance(x, Tensor):
        return np.broadcast_to(x, shape)
    old = x.shape
    return _node(np.broadcast_to(x.data, shape), (x,), lambda g: (_unbroadcast(g, old),))


def concatenate(xs, axis=-1):
    if not _any_tensor(*xs):
        return np.concatenate(xs, axis=axis)
    xs = [_as_tensor(x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _node(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def grad(loss_fn, params):
    """Evaluate ``loss_fn()`` and return (loss value, [d loss / d p for p]).

    ``params`` are leaf tensors; their ``.grad`` is reset before the pass.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    return loss.item(), [np.zeros_like(p.data) if p.grad is None else p.grad
                         for p in params]
