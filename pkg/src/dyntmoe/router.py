"""Temporal memory router.

A GRU runs over the patch sequence of each (sample, variable) row, so every
routing decision sees the patches before it. Hidden states archived at drift
events form an anomaly repository; the current state attends over it by
cosine similarity and is blended with the retrieved prototype through a
learned sigmoid gate before the head produces per-expert logits.
"""

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, ParameterError
from .nn import MLP, Linear, Module, uniform_init
from .tensor import (
    Tensor,
    concat,
    masked_softmax,
    matmul,
    parameter,
    sigmoid,
    sqrt,
    stack,
    tanh,
)

log = logging.getLogger(__name__)

ROUTER_KINDS = ("gru", "linear", "mlp")


class GRUCell(Module):
    """h' = (1 - z) * n + z * h with the reset gate inside the candidate."""

    def __init__(self, d_in, d_hidden, rng):
        self.d_hidden = d_hidden
        self.update = Linear(d_in + d_hidden, d_hidden, rng)
        self.reset = Linear(d_in + d_hidden, d_hidden, rng)
        self.candidate = Linear(d_in + d_hidden, d_hidden, rng)

    def __call__(self, x, h):
        if x.shape[-1] + h.shape[-1] != self.update.d_in:
            raise DimensionError(
                f"GRU expects input+hidden width {self.update.d_in}, got {x.shape} and {h.shape}"
            )
        xh = concat([x, h], axis=-1)
        z = sigmoid(self.update(xh))
        r = sigmoid(self.reset(xh))
        n = tanh(self.candidate(concat([x, r * h], axis=-1)))
        return (1.0 - z) * n + z * h


@dataclass
class ArchivedState:
    hidden: np.ndarray
    event_id: int


class AnomalyRepository:
    """FIFO store of hidden-state snapshots taken at drift events."""

    def __init__(self, capacity=16):
        if capacity < 1:
            raise ParameterError("repository capacity must be >= 1")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def archive(self, hidden, event_id):
        self._items.append(ArchivedState(np.array(hidden, dtype=np.float64).ravel(), int(event_id)))

    def __len__(self):
        return len(self._items)

    @property
    def event_ids(self):
        return [s.event_id for s in self._items]

    def states(self):
        return np.stack([s.hidden for s in self._items]) if self._items else None

    def to_dict(self):
        return {
            "capacity": self.capacity,
            "states": [s.hidden.tolist() for s in self._items],
            "event_ids": self.event_ids,
        }

    @classmethod
    def from_dict(cls, d):
        repo = cls(d["capacity"])
        for h, e in zip(d["states"], d["event_ids"]):
            repo.archive(np.array(h), e)
        return repo


def _row_norms(x):
    sq = (x * x).sum(axis=-1, keepdims=True)
    # zero vectors get norm 1 so their cosine similarity comes out as 0
    return sqrt(sq + (sq.data == 0.0))


def fuse_with_memory(h, repo, fusion, temperature=1.0, alpha=None):
    """Blend ``h`` (..., d_h) with its cosine-attention readout from ``repo``.

    ``alpha`` overrides the fusion gate (tests); an empty repository returns
    ``h`` untouched.
    """
    mem = repo.states()
    if mem is None:
        return h
    m = Tensor(mem)
    m_norm = np.linalg.norm(mem, axis=1)
    m_norm[m_norm == 0] = 1.0
    cos = matmul(h / _row_norms(h), Tensor((mem / m_norm[:, None]).T))
    attn = masked_softmax(cos * (1.0 / temperature), None, axis=-1)
    h_ref = matmul(attn, m)
    if alpha is None:
        alpha = sigmoid(fusion(concat([h, h_ref], axis=-1)))
    return alpha * h + (1.0 - alpha) * h_ref


def top_k_mask(logits, k):
    """Boolean mask of the k largest logits per row; ties go to the lower index."""
    logits = np.asarray(logits)
    e = logits.shape[-1]
    k = min(k, e)
    order = np.argsort(-logits, axis=-1, kind="stable")[..., :k]
    mask = np.zeros(logits.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    return mask


def gate_weights(logits, k):
    """Softmax over the top-k logits, zeros elsewhere (plain numpy)."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    logits = np.asarray(logits, dtype=np.float64)
    if k > logits.shape[-1]:
        log.warning("top-k %d exceeds %d experts; clamping", k, logits.shape[-1])
    return masked_softmax(Tensor(logits), top_k_mask(logits, k)).data


def switch_rate(gates):
    """Fraction of adjacent patch pairs whose argmax expert differs.

    ``gates`` is (rows, patches, experts).
    """
    top = np.asarray(gates).argmax(axis=-1)
    if top.shape[-1] < 2:
        return 0.0
    return float(np.mean(top[..., 1:] != top[..., :-1]))


class TemporalRouter(Module):
    """Per-patch gating over an ordered, growable set of experts.

    ``kind`` selects the state model: "gru" (recurrent) or the memoryless
    "linear"/"mlp" alternatives used for ablations.
    """

    def __init__(self, d_model, d_hidden, expert_ids, rng, kind="gru", use_memory=True,
                 repo_capacity=16, temperature=1.0, protected=None):
        if kind not in ROUTER_KINDS:
            raise ParameterError(f"router kind must be one of {ROUTER_KINDS}, got {kind!r}")
        self.kind = kind
        self.d_hidden = d_hidden
        self.use_memory = use_memory
        self.temperature = temperature
        if kind == "mlp":
            self.proj = MLP(d_model, d_hidden, d_hidden, rng)
        else:
            self.proj = Linear(d_model, d_hidden, rng)
        self.gru = GRUCell(d_hidden, d_hidden, rng) if kind == "gru" else None
        self.fusion = Linear(2 * d_hidden, 1, rng)
        self.head = {eid: parameter(uniform_init(rng, (d_hidden,), d_hidden)) for eid in expert_ids}
        self._protected = set(expert_ids if protected is None else protected)
        self._repo = AnomalyRepository(repo_capacity)
        self.clamp_warnings = 0
        self.last_hidden = None

    # -- structure -------------------------------------------------------
    @property
    def repository(self):
        return self._repo

    @repository.setter
    def repository(self, repo):
        self._repo = repo

    @property
    def expert_ids(self):
        return list(self.head)

    def backbone_parameters(self):
        """Everything except the head rows."""
        return [(n, p) for n, p in self.named_parameters() if not n.startswith("head.")]

    def grow_head(self, expert_id):
        if expert_id in self.head:
            raise ContractError(f"router already has a head row for {expert_id!r}")
        self.head[expert_id] = parameter(np.zeros(self.d_hidden))

    def shrink_head(self, expert_id):
        if expert_id in self._protected:
            raise ContractError(f"head row {expert_id!r} belongs to a base expert")
        if expert_id not in self.head:
            raise ContractError(f"no head row for {expert_id!r}")
        del self.head[expert_id]

    def archive_state(self, hidden, event_id):
        self._repo.archive(hidden, event_id)

    # -- forward ---------------------------------------------------------
    def hidden_sequence(self, x):
        """(rows, N, D) -> (rows, N, d_h); state starts at zero for every row."""
        if self.gru is None:
            return self.proj(x)
        rows, n = x.shape[0], x.shape[1]
        phi = self.proj(x)
        h = Tensor(np.zeros((rows, self.d_hidden)))
        states = []
        for t in range(n):
            h = self.gru(phi[:, t], h)
            states.append(h)
        return stack(states, axis=1)

    def logits(self, h):
        w = stack(list(self.head.values()), axis=0)  # (E, d_h)
        return matmul(h, w.swapaxes(0, 1))

    def route(self, h, k):
        """Gate tensor (..., E) and the boolean active mask for states ``h``."""
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        n_exp = len(self.head)
        if k > n_exp:
            self.clamp_warnings += 1
            log.warning("top-k %d exceeds %d experts; clamping", k, n_exp)
            k = n_exp
        logits = self.logits(h)
        mask = top_k_mask(logits.data, k)
        return masked_softmax(logits, mask, axis=-1), mask

    def __call__(self, x, k):
        h = self.hidden_sequence(x)
        self.last_hidden = h.data[:, -1].copy()
        if self.use_memory:
            h = fuse_with_memory(h, self._repo, self.fusion, self.temperature)
        return self.route(h, k)
