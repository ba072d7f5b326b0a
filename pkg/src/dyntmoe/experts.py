"""Heterogeneous experts, the cyclic relation layer and the per-patch mixture.

Every expert maps a patch sequence (..., N, D) to the same shape so outputs
can be combined position by position with the router's gates.
"""

import copy
import json

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .nn import MLP, Linear, Module, uniform_init
from .tensor import (
    Tensor,
    causal_conv1d,
    concat,
    cos,
    irfft,
    matmul,
    moving_average,
    parameter,
    rfft,
    sigmoid,
    sin,
    softmax,
    sqrt,
)

EXPERT_KINDS = ("identity", "trend", "seasonality", "fluctuation")


class Expert(Module):
    kind = None

    def __init__(self, expert_id, protected=True, created_at="base"):
        self._id = expert_id
        self._protected = protected
        self._created_at = created_at

    @property
    def id(self):
        return self._id

    @property
    def protected(self):
        return self._protected

    @property
    def created_at(self):
        return self._created_at

    def clone(self, expert_id, created_at, protected=False):
        """Independent copy with fresh identity; parameters are deep-copied."""
        twin = copy.deepcopy(self)
        for p in twin.parameters():
            p.grad = None
        twin._id, twin._created_at, twin._protected = expert_id, created_at, protected
        return twin

    def describe(self):
        return {
            "id": self.id,
            "kind": self.kind,
            "protected": self.protected,
            "created_at": self.created_at,
            "params": self.param_count(),
        }


class IdentityExpert(Expert):
    """Per-position linear shortcut."""

    kind = "identity"

    def __init__(self, d_model, rng, **meta):
        super().__init__(**meta)
        self.linear = Linear(d_model, d_model, rng)

    def __call__(self, x):
        return self.linear(x)


class TrendExpert(Expert):
    """Moving average along the patch axis, then an MLP."""

    kind = "trend"

    def __init__(self, d_model, rng, window=3, **meta):
        super().__init__(**meta)
        self.window = window
        self.mlp = MLP(d_model, d_model, d_model, rng)

    def pooled(self, x):
        return moving_average(x, min(self.window, x.shape[-2]), axis=-2)

    def __call__(self, x):
        return self.mlp(self.pooled(x))


class SeasonalityExpert(Expert):
    """Spectrum modulation over the patch axis with a periodic activation.

    The frequency network sees [re, im] of every channel for one bin at a
    time and is shared across bins.
    """

    kind = "seasonality"

    def __init__(self, d_model, rng, **meta):
        super().__init__(**meta)
        if d_model % 2:
            raise ConfigError(f"seasonality expert needs an even model width, got {d_model}")
        self.d_model = d_model
        self.freq = MLP(2 * d_model, 2 * d_model, 2 * d_model, rng)
        self.out = Linear(d_model, d_model, rng)

    def spectral(self, x):
        n, d = x.shape[-2], self.d_model
        re, im = rfft(x.swapaxes(-1, -2))  # (..., D, F)
        spec = self.freq(concat([re, im], axis=-2).swapaxes(-1, -2))  # (..., F, 2D)
        spec = spec.swapaxes(-1, -2)
        z = irfft(spec[..., :d, :], spec[..., d:, :], n)  # (..., D, N)
        return z.swapaxes(-1, -2)

    def __call__(self, x):
        z = self.spectral(x)
        half = self.d_model // 2
        return self.out(concat([sin(z[..., :half]), cos(z[..., half:])], axis=-1))


class FluctuationExpert(Expert):
    """Gated causal convolution: content * sigmoid(gate)."""

    kind = "fluctuation"

    def __init__(self, d_model, rng, kernel=3, **meta):
        super().__init__(**meta)
        fan_in = kernel * d_model
        self.content_w = parameter(uniform_init(rng, (kernel, d_model, d_model), fan_in))
        self.content_b = parameter(uniform_init(rng, (d_model,), fan_in))
        self.gate_w = parameter(uniform_init(rng, (kernel, d_model, d_model), fan_in))
        self.gate_b = parameter(uniform_init(rng, (d_model,), fan_in))

    def __call__(self, x):
        content = causal_conv1d(x, self.content_w, self.content_b)
        return content * sigmoid(causal_conv1d(x, self.gate_w, self.gate_b))


_KIND_CLASSES = {
    "identity": IdentityExpert,
    "trend": TrendExpert,
    "seasonality": SeasonalityExpert,
    "fluctuation": FluctuationExpert,
}


def make_expert(kind, d_model, rng, expert_id=None, trend_window=3, conv_kernel=3,
                protected=True, created_at="base"):
    if kind not in _KIND_CLASSES:
        raise ConfigError(f"unknown expert kind {kind!r}; expected one of {EXPERT_KINDS}")
    meta = dict(expert_id=expert_id or kind, protected=protected, created_at=created_at)
    if kind == "trend":
        return TrendExpert(d_model, rng, window=trend_window, **meta)
    if kind == "fluctuation":
        return FluctuationExpert(d_model, rng, kernel=conv_kernel, **meta)
    return _KIND_CLASSES[kind](d_model, rng, **meta)


def mix(outputs, gates):
    """Per-position convex combination of expert outputs.

    ``outputs`` lists one (..., N, D) tensor per gate column, or None for an
    expert no position selected; ``gates`` is (..., N, E).
    """
    if len(outputs) != gates.shape[-1]:
        raise DimensionError(f"{len(outputs)} expert outputs for {gates.shape[-1]} gate columns")
    total = None
    for e, out in enumerate(outputs):
        if out is None:
            if np.any(gates.data[..., e]):
                raise ContractError(f"expert {e} has non-zero gates but was not evaluated")
            continue
        term = gates[..., e : e + 1] * out
        total = term if total is None else total + term
    if total is None:
        raise ContractError("no expert was evaluated")
    return total


class RelationLayer(Module):
    """Cross-variable mixing from a periodic prototype plus a learned residual.

    The prototype row is picked by each sample's origin timestamp modulo the
    cycle length; the residual network corrects it from the cosine
    similarity of the current variable representations.
    """

    def __init__(self, n_vars, cycle_len, rng):
        self.n_vars = n_vars
        self.cycle_len = cycle_len
        self.cycle = parameter(np.zeros((cycle_len, n_vars, n_vars)))
        self.residual = MLP(n_vars * n_vars, n_vars * n_vars, n_vars * n_vars, rng)

    def current_relation(self, feats):
        sq = (feats * feats).sum(axis=-1, keepdims=True)
        unit = feats / sqrt(sq + (sq.data == 0.0))
        return matmul(unit, unit.swapaxes(-1, -2))

    def mixing(self, h, origins):
        """Row-stochastic (B, V, V) mixing matrices for ``h`` (B, V, N, D)."""
        b, v = h.shape[0], h.shape[1]
        if v != self.n_vars:
            raise DimensionError(f"relation layer built for {self.n_vars} variables, got {v}")
        feats = h.reshape(b, v, -1)
        idx = np.asarray(origins, dtype=np.int64) % self.cycle_len
        proto = self.cycle[idx]
        delta = (self.current_relation(feats) - proto).reshape(b, v * v)
        final = proto + self.residual(delta).reshape(b, v, v)
        return softmax(final, axis=-1)

    def __call__(self, h, origins):
        b, v, n, d = h.shape
        a = self.mixing(h, origins)
        return matmul(a, h.reshape(b, v, n * d)).reshape(b, v, n, d)


def inventory(pools):
    """JSON-ready description of per-layer expert pools."""
    return [
        {"layer": i, "experts": [e.describe() for e in pool.values()]}
        for i, pool in enumerate(pools)
    ]


def inventory_json(pools):
    return json.dumps(inventory(pools), indent=2, sort_keys=True)
