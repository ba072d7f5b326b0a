"""Parameter containers built on :mod:`dyntmoe.tensor`."""

import hashlib

import numpy as np

from .tensor import Tensor, matmul, parameter, relu


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Walks attributes in definition order to enumerate parameters.

    Attributes may be Tensors with ``requires_grad``, sub-Modules, or lists
    and dicts of either; dict keys become path components.
    """

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _walk(value, path):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{path}.{i}")
    elif isinstance(value, dict):
        for k, v in value.items():
            yield from _walk(v, f"{path}.{k}")


def param_digest(named):
    """SHA-256 over parameter names, shapes and raw bytes."""
    h = hashlib.sha256()
    for name, p in named:
        h.update(name.encode())
        h.update(str(p.shape).encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        self.weight = parameter(uniform_init(rng, (d_in, d_out), d_in))
        self.bias = parameter(uniform_init(rng, (d_out,), d_in)) if bias else None

    @property
    def d_in(self):
        return self.weight.shape[0]

    @property
    def d_out(self):
        return self.weight.shape[1]

    def __call__(self, x):
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class MLP(Module):
    """Two linear maps with a ReLU between them."""

    def __init__(self, d_in, d_hidden, d_out, rng):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def __call__(self, x):
        return self.fc2(relu(self.fc1(x)))
