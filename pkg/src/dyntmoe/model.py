"""Stacked mixture-of-experts forecaster.

Each variable is patched and embedded on its own; every MoE layer routes
the patch sequence through a temporal router, mixes the selected experts
and then lets the relation layer exchange information across variables.
A linear head maps the flattened patch features to the horizon.
"""

import numpy as np

from .config import Config
from .data import PatchEmbedding
from .errors import ContractError
from .experts import RelationLayer, make_expert, mix
from .nn import Linear, Module
from .router import TemporalRouter
from .tensor import as_tensor, no_grad


class MoELayer(Module):
    def __init__(self, cfg, rng):
        self._cfg = cfg
        self.experts = {}
        for i, kind in enumerate(cfg.roster):
            eid = f"b{i}-{kind}"
            self.experts[eid] = make_expert(
                kind, cfg.d_model, rng, expert_id=eid,
                trend_window=cfg.trend_window, conv_kernel=cfg.conv_kernel,
            )
        self.router = TemporalRouter(
            cfg.d_model, cfg.d_hidden, list(self.experts), rng, kind=cfg.router,
            use_memory=cfg.use_memory, repo_capacity=cfg.repo_capacity,
            temperature=cfg.memory_temperature,
        )
        self.relation = RelationLayer(cfg.n_vars, cfg.cycle_len, rng) if cfg.use_relation else None
        self._last_usage = None
        self._last_gates = None

    @property
    def expert_ids(self):
        return list(self.experts)

    def drift_ids(self):
        return [e for e, x in self.experts.items() if not x.protected]

    def __call__(self, h, origins):
        b, v, n, d = h.shape
        ids = list(self.experts)
        if ids != self.router.expert_ids:
            raise ContractError(f"expert pool {ids} and router head {self.router.expert_ids} disagree")
        x = h.reshape(b * v, n, d)
        gates, mask = self.router(x, self._cfg.top_k)
        active = mask.reshape(-1, len(ids)).any(axis=0)
        outs = [self.experts[e](x) if active[i] else None for i, e in enumerate(ids)]
        y = mix(outs, gates).reshape(b, v, n, d)
        self._last_gates = gates.data
        self._last_usage = dict(zip(ids, gates.data.reshape(-1, len(ids)).mean(axis=0).tolist()))
        if self.relation is not None:
            y = self.relation(y, origins)
        return y


class ForecastModel(Module):
    """(B, L, V) look-back windows -> (B, T, V) forecasts."""

    def __init__(self, cfg):
        cfg = cfg if isinstance(cfg, Config) else Config.from_dict(cfg)
        self._cfg = cfg.validate()
        self._rng = np.random.default_rng(cfg.seed)
        self.embed = PatchEmbedding(cfg.patch_len, cfg.stride, cfg.d_model, self._rng)
        self.layers = [MoELayer(cfg, self._rng) for _ in range(cfg.n_layers)]
        self.head = Linear(cfg.n_patches * cfg.d_model, cfg.pred_len, self._rng)
        # fresh experts need their own stream so adding one never perturbs init of the rest
        self._growth_rng = np.random.default_rng([cfg.seed, 1])
        self._drift_counter = 0

    @property
    def config(self):
        return self._cfg

    def __call__(self, x, origins=None):
        cfg = self._cfg
        x = as_tensor(x)
        b = x.shape[0]
        if x.shape[1:] != (cfg.seq_len, cfg.n_vars):
            raise ContractError(f"expected windows (B, {cfg.seq_len}, {cfg.n_vars}), got {x.shape}")
        origins = np.zeros(b, dtype=np.int64) if origins is None else np.asarray(origins)
        h = self.embed(x)
        for layer in self.layers:
            h = layer(h, origins)
        out = self.head(h.reshape(b, cfg.n_vars, cfg.n_patches * cfg.d_model))
        return out.swapaxes(1, 2)

    def predict(self, xs, origins=None, batch_size=256):
        """Gradient-free forecasts as an ndarray, batched to bound memory."""
        xs = np.asarray(xs, dtype=np.float64)
        origins = np.zeros(len(xs), dtype=np.int64) if origins is None else np.asarray(origins)
        outs = []
        with no_grad():
            for i in range(0, len(xs), batch_size):
                outs.append(self(xs[i : i + batch_size], origins[i : i + batch_size]).data)
        if not outs:
            return np.zeros((0, self._cfg.pred_len, self._cfg.n_vars))
        return np.concatenate(outs)

    # -- structure -------------------------------------------------------
    def pool_sizes(self):
        return [len(layer.experts) for layer in self.layers]

    def drift_count(self):
        return max((len(layer.drift_ids()) for layer in self.layers), default=0)

    def expert_parameters(self, expert_id):
        return [
            (f"layers.{i}.experts.{expert_id}.{n}", p)
            for i, layer in enumerate(self.layers) if expert_id in layer.experts
            for n, p in layer.experts[expert_id].named_parameters()
        ]

    def head_parameters(self):
        return [
            (f"layers.{i}.router.head.{eid}", p)
            for i, layer in enumerate(self.layers)
            for eid, p in layer.router.head.items()
        ]

    def add_expert(self, kind, created_at):
        """Add one drift expert of ``kind`` to every layer under a shared id.

        The expert starts as a copy of the layer's first base expert of that
        kind, or from a fresh init when the roster has none.
        """
        cfg = self._cfg
        self._drift_counter += 1
        eid = f"d{self._drift_counter}-{kind}"
        for layer in self.layers:
            template = next((e for e in layer.experts.values() if e.kind == kind and e.protected), None)
            if template is not None:
                expert = template.clone(eid, created_at)
            else:
                expert = make_expert(
                    kind, cfg.d_model, self._growth_rng, expert_id=eid,
                    trend_window=cfg.trend_window, conv_kernel=cfg.conv_kernel,
                    protected=False, created_at=created_at,
                )
            layer.experts[eid] = expert
            layer.router.grow_head(eid)
        return eid

    def remove_expert(self, layer_index, expert_id):
        layer = self.layers[layer_index]
        if expert_id not in layer.experts:
            raise ContractError(f"layer {layer_index} has no expert {expert_id!r}")
        if layer.experts[expert_id].protected:
            raise ContractError(f"expert {expert_id!r} is a protected base expert")
        layer.router.shrink_head(expert_id)
        del layer.experts[expert_id]

    def last_hidden(self):
        """Final-patch router state of the latest forward pass, per layer.

        Rows are averaged so one vector summarises the window.
        """
        return [layer.router.last_hidden.mean(axis=0) for layer in self.layers]

    def archive(self, states, event_id):
        for layer, h in zip(self.layers, states):
            layer.router.archive_state(h, event_id)
