"""Reverse-mode automatic differentiation over float64 numpy arrays.

Each ``Tensor`` produced by an operation remembers its parents and a closure
that maps the output gradient to parent gradients. ``backward`` walks the
graph in reverse topological order, summing contributions when a tensor feeds
several consumers.
"""

from contextlib import contextmanager

import numpy as np
from scipy.special import erf

_GRAD_ENABLED = True


class ContractError(RuntimeError):
    """Misuse of the autodiff API (non-scalar loss, missing gradient, ...)."""


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    @staticmethod
    def _make(data, parents, backward):
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            return Tensor(data, True, _parents=parents, _backward=backward)
        return Tensor(data)

    def _accumulate(self, grad):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self, grad=None):
        """Populate ``.grad`` on every tensor that requires it.

        Without ``grad`` the tensor must be a scalar; its seed gradient is 1.
        Gradients accumulate into existing ``.grad`` arrays of leaves.
        """
        if grad is None:
            if self.size != 1:
                raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor requiring grad")

        order, seen = [], set()
        stack = [(self, False)]
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

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- elementwise arithmetic --------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(self.data + other.data, (self, other),
                            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data

        def backward(g):
            return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

        return Tensor._make(x * y, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data

        def backward(g):
            return (_unbroadcast(g / y, x.shape),
                    _unbroadcast(-g * x / (y * y), y.shape))

        return Tensor._make(x / y, (self, other), backward)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        x = self.data
        out = x ** exponent
        return Tensor._make(out, (self,),
                            lambda g: (g * exponent * x ** (exponent - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        if x.ndim != 2 or y.ndim != 2:
            raise ContractError("matmul supports 2-D operands only")

        def backward(g):
            return g @ y.T, x.T @ g

        return Tensor._make(x @ y, (self, other), backward)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- unary functions ---------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,))

    def log2(self):
        x = self.data
        return Tensor._make(np.log2(x), (self,), lambda g: (g / (x * np.log(2.0)),))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: (g / (2.0 * out),))

    # -- reductions and shape ------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(self.data.reshape(shape), (self,),
                            lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        return Tensor._make(self.data.transpose(axes), (self,),
                            lambda g: (g.transpose(inverse),))

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, index):
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._make(self.data[index], (self,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), backward)


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x, approximate=False):
    """``x * Phi(x)`` with the exact Gaussian CDF; ``approximate=True`` uses the tanh form."""
    x = as_tensor(x)
    v = x.data
    if approximate:
        c = np.sqrt(2.0 / np.pi)
        inner = c * (v + 0.044715 * v ** 3)
        t = np.tanh(inner)
        out = 0.5 * v * (1.0 + t)
        dout = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3 * 0.044715 * v * v)
    else:
        cdf = 0.5 * (1.0 + erf(v / _SQRT2))
        out = v * cdf
        dout = cdf + v * _INV_SQRT_2PI * np.exp(-0.5 * v * v)
    return Tensor._make(out, (x,), lambda g: (g * dout,))


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (batch, in, length) with ``weight`` (out, in, kernel)."""
    x, weight = as_tensor(x), as_tensor(weight)
    batch, cin, length = x.shape
    cout, wcin, kernel = weight.shape
    if cin != wcin:
        raise ValueError(f"input has {cin} channels, weight expects {wcin}")
    if length + 2 * padding < kernel:
        raise ValueError("input shorter than kernel")
    out_len = (length + 2 * padding - kernel) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    taps = np.arange(kernel)[:, None] + stride * np.arange(out_len)[None, :]
    cols = xp[:, :, taps]                                   # (B, C, kernel, L_out)
    cols_mat = cols.transpose(0, 3, 1, 2).reshape(batch * out_len, cin * kernel)
    w_mat = weight.data.reshape(cout, cin * kernel)
    out = (cols_mat @ w_mat.T).reshape(batch, out_len, cout).transpose(0, 2, 1)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
        parents.append(bias)

    def backward(g):
        g_mat = g.transpose(0, 2, 1).reshape(batch * out_len, cout)
        gw = (g_mat.T @ cols_mat).reshape(weight.shape)
        gcols = (g_mat @ w_mat).reshape(batch, out_len, cin, kernel).transpose(0, 2, 3, 1)
        gxp = np.zeros(xp.shape)
        span = stride * (out_len - 1) + 1
        for k in range(kernel):
            gxp[:, :, k:k + span:stride] += gcols[:, :, k, :]
        gx = gxp[:, :, padding:padding + length] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return Tensor._make(out, tuple(parents), backward)
