"""Dense float64 tensors with reverse-mode differentiation.

Every op records its parents and a closure mapping the upstream gradient to
one gradient per parent. ``backward`` orders the recorded graph
topologically and replays it in reverse, so each node is visited once.
Gradients accumulate additively, which is what makes reusing a tensor sum
its contributions.

Elementwise ops follow numpy broadcasting; gradients are summed back to the
operand's shape.
"""

from contextlib import contextmanager

import numpy as np

from . import fft as _fft
from .errors import ContractError, DimensionError, ParameterError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Run ops without recording the graph (evaluation, parameter surgery)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled():
    return _GRAD_ENABLED


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise DimensionError(f"shapes {a} and {b} cannot be combined elementwise") from None


class Tensor:
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _result(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data if data.dtype == np.float64 else data.astype(np.float64)
        out.grad = None
        out.op = op
        out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- introspection -------------------------------------------------
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # -- autodiff --------------------------------------------------------
    def backward(self):
        backward(self)

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return tsum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(data, requires_grad=True)


def backward(loss):
    """Populate ``grad`` on every graph node reachable from a scalar loss."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractError(f"backward needs a scalar loss, got shape {shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# -- elementwise ----------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), bw, "add")


def neg(a):
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return Tensor._result(out, (a, b), bw, "div")


def power(a, p):
    p = float(p)

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return Tensor._result(a.data ** p, (a,), bw, "pow")


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a):
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sin(a):
    return Tensor._result(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def cos(a):
    return Tensor._result(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def relu(a):
    mask = a.data > 0
    return Tensor._result(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def exp(a):
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def sqrt(a):
    out = np.sqrt(a.data)
    return Tensor._result(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def absolute(a):
    return Tensor._result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "sin": sin,
    "cos": cos,
    "relu": relu,
}


def elementwise(op, *inputs):
    """Dispatch one of add, mul, sigmoid, tanh, sin, cos, relu by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ParameterError(f"unknown elementwise op {op!r}") from None
    return fn(*(as_tensor(x) for x in inputs))


# -- shape & reduction ----------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._result(np.asarray(out), (a,), bw, "sum")


def reshape(a, shape):
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return Tensor._result(
        a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose"
    )


def _is_advanced(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(p, (list, np.ndarray)) for p in parts)


def index(a, idx):
    advanced = _is_advanced(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if advanced:
            np.add.at(full, idx, g)
        else:
            full[idx] += g
        return (full,)

    return Tensor._result(np.array(a.data[idx]), (a,), bw, "index")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._result(data, tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % data.ndim

    def bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return Tensor._result(data, tuple(tensors), bw, "stack")


# -- linear algebra -------------------------------------------------------

def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch axes differ: {a.shape} @ {b.shape}") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(a.data @ b.data, (a, b), bw, "matmul")


def masked_softmax(x, mask=None, axis=-1):
    """Softmax along ``axis``; entries where ``mask`` is False get weight 0."""
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (x,), bw, "softmax")


def softmax(x, axis=-1):
    return masked_softmax(x, None, axis)


# -- spectral ---------------------------------------------------------------

def _rfft_adjoint(G, n):
    full = np.zeros(G.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : G.shape[-1]] = G
    return (n * _fft.ifft(full)).real


def rfft(x):
    """Real-input DFT over the last axis as a (real, imag) tensor pair."""
    n = x.shape[-1]
    if n < 1:
        raise DimensionError("rfft needs a non-empty last axis")
    X = _fft.rfft(x.data)
    re = Tensor._result(
        np.ascontiguousarray(X.real), (x,), lambda g: (_rfft_adjoint(g + 0j, n),), "rfft.re"
    )
    im = Tensor._result(
        np.ascontiguousarray(X.imag), (x,), lambda g: (_rfft_adjoint(1j * g, n),), "rfft.im"
    )
    return re, im


def irfft(re, im, n):
    """Inverse of ``rfft``: half spectrum pair -> length-n real signal."""
    if re.shape != im.shape:
        raise DimensionError(f"real/imag parts differ in shape: {re.shape} vs {im.shape}")
    if re.shape[-1] != n // 2 + 1:
        raise DimensionError(
            f"half spectrum length {re.shape[-1]} does not match n={n}"
        )
    out = _fft.irfft(re.data + 1j * im.data, n)
    weight = np.full(n // 2 + 1, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    imag_mask = np.ones(n // 2 + 1)
    imag_mask[0] = 0.0
    if n % 2 == 0:
        imag_mask[-1] = 0.0

    def bw(g):
        G = _fft.fft(g)[..., : n // 2 + 1] * (weight / n)
        return G.real, G.imag * imag_mask

    return Tensor._result(out, (re, im), bw, "irfft")


# -- sequence ops -----------------------------------------------------------

def _reflect(j, n):
    if n == 1:
        return 0
    period = 2 * (n - 1)
    j = abs(j) % period
    return period - j if j > n - 1 else j


def moving_average_matrix(n, window):
    if window < 1:
        raise ParameterError(f"window must be >= 1, got {window}")
    if window > n:
        raise ParameterError(f"window {window} exceeds sequence length {n}")
    left = window // 2
    mat = np.zeros((n, n))
    for t in range(n):
        for j in range(t - left, t - left + window):
            mat[t, _reflect(j, n)] += 1.0 / window
    return mat


def moving_average(x, window, axis=-2):
    """Same-length centered average along ``axis``, reflecting at the edges.

    Even windows lean one step toward the past.
    """
    ax = axis % x.ndim
    mat = moving_average_matrix(x.shape[ax], window)
    moved = np.moveaxis(x.data, ax, -1)
    out = np.moveaxis(moved @ mat.T, -1, ax)

    def bw(g):
        gm = np.moveaxis(g, ax, -1) @ mat
        return (np.moveaxis(gm, -1, ax),)

    return Tensor._result(np.ascontiguousarray(out), (x,), bw, "moving_average")


def _shift(a, k):
    """a[..., t, :] -> a[..., t-k, :], zero-filled; axis -2 is time."""
    if k == 0:
        return a
    out = np.zeros_like(a)
    out[..., k:, :] = a[..., :-k, :]
    return out


def _unshift(a, k):
    if k == 0:
        return a
    out = np.zeros_like(a)
    out[..., :-k, :] = a[..., k:, :]
    return out


def causal_conv1d(x, kernel, bias=None):
    """Causal convolution over axis -2 of ``x`` (..., N, D_in).

    ``kernel`` is (K, D_in, D_out); tap k multiplies the input k steps back,
    so tap 0 sees the current position.
    """
    K, din, dout = kernel.shape
    if x.shape[-1] != din:
        raise DimensionError(f"conv input channels {x.shape} do not match kernel {kernel.shape}")
    n = x.shape[-2]
    taps = min(K, n)
    out = np.zeros(x.shape[:-1] + (dout,))
    for k in range(taps):
        out += _shift(x.data, k) @ kernel.data[k]
    parents = (x, kernel)
    if bias is not None:
        out = out + bias.data
        parents = parents + (bias,)

    def bw(g):
        gx = np.zeros_like(x.data)
        gk = np.zeros_like(kernel.data)
        g2 = g.reshape(-1, dout)
        for k in range(taps):
            gx += _unshift(g @ kernel.data[k].T, k)
            gk[k] = _shift(x.data, k).reshape(-1, din).T @ g2
        grads = (gx, gk)
        if bias is not None:
            grads = grads + (g2.sum(axis=0),)
        return grads

    return Tensor._result(out, parents, bw, "causal_conv1d")
