"""Expert lifecycle: residual profiling, growth, alignment, usage tracking
and pruning. Structure only changes while a training run is active.
"""

import json
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, DataError
from .fft import rfft as _rfft
from .optim import AdamW
from .tensor import Tensor, backward

PROFILE_KINDS = ("trend", "seasonality", "fluctuation")
# A pure alternation puts all energy in the Nyquist bin, which is both the
# top spectral bin and high-band energy; fluctuation has to win that tie.
TIE_ORDER = ("trend", "fluctuation", "seasonality")
TIE_TOL = 1e-9
TOP_K_BINS = 3


@dataclass
class ProfilerReport:
    s_trend: float
    s_sea: float
    s_fluc: float
    chosen: str
    degenerate: bool = False
    n_samples: int = 0
    length: int = 0

    @property
    def scores(self):
        return {"trend": self.s_trend, "seasonality": self.s_sea, "fluctuation": self.s_fluc}


def _as_samples(residuals):
    e = np.asarray(residuals, dtype=np.float64)
    if e.ndim == 1:
        return e[None, :]
    if e.ndim == 2:
        return e
    if e.ndim == 3:  # (B, T, D): every channel of every window is one sample
        return np.moveaxis(e, 1, 2).reshape(-1, e.shape[1])
    raise DataError(f"residuals must be 1-, 2- or 3-d, got shape {e.shape}")


def profile(residuals, min_length=8):
    """Trend, seasonality and fluctuation scores of forecast residuals.

    ``residuals`` is (samples, T), (B, T, D) or a single length-T vector.
    """
    e = _as_samples(residuals)
    n, length = e.shape
    if length < min_length:
        raise DataError(f"profiling needs residuals of length >= {min_length}, got {length}")
    mu = e.mean(axis=1, keepdims=True)
    sd = e.std(axis=1, keepdims=True)
    z = (e - mu) / (sd + 1e-8)
    energy = (z * z).sum(axis=1)
    live = energy > 0
    if not live.any():
        return ProfilerReport(0.0, 0.0, 0.0, "trend", True, n, length)

    t = np.linspace(-1.0, 1.0, length)
    design = np.stack([np.ones(length), t], axis=1)
    coef, *_ = np.linalg.lstsq(design, z.T, rcond=None)
    sse = ((z - (design @ coef).T) ** 2).sum(axis=1)
    r2 = np.where(live, np.maximum(0.0, 1.0 - sse / np.where(live, energy, 1.0)), 0.0)

    power = np.abs(_rfft(z)) ** 2
    power = power[:, 1:]  # DC is ~0 after centring and only adds noise to the ranking
    bins = np.arange(1, length // 2 + 1)
    total = power.sum(axis=1)
    ok = total > 0
    safe = np.where(ok, total, 1.0)
    top = np.sort(power, axis=1)[:, ::-1][:, :TOP_K_BINS].sum(axis=1)
    high = power[:, bins > length / 4].sum(axis=1)
    sea = np.where(ok, top / safe, 0.0)
    fluc = np.where(ok, high / safe, 0.0)

    s = {"trend": float(r2.mean()), "seasonality": float(sea.mean()), "fluctuation": float(fluc.mean())}
    best = max(s.values())
    chosen = next(k for k in TIE_ORDER if s[k] >= best - TIE_TOL)
    return ProfilerReport(s["trend"], s["seasonality"], s["fluctuation"], chosen, False, n, length)


class UsageTracker:
    """Mean gate weight of each expert per monitoring window.

    An expert becomes a prune candidate once its last ``patience`` window
    means are all below ``tau``.
    """

    def __init__(self, tau=0.02, patience=3, window=200):
        if patience < 1 or window < 1:
            raise ContractError("patience and window must be >= 1")
        self.tau = tau
        self.patience = patience
        self.window = window
        self.history = defaultdict(list)
        self._sums = defaultdict(float)
        self._counts = defaultdict(int)
        self.steps = 0

    def record(self, usage):
        """Add one training step's mean gate weights; True when a window closes."""
        for eid, w in usage.items():
            self._sums[eid] += float(w)
            self._counts[eid] += 1
        self.steps += 1
        return self.steps % self.window == 0

    def close_window(self):
        for eid, total in self._sums.items():
            self.history[eid].append(total / self._counts[eid])
        self._sums.clear()
        self._counts.clear()

    def push_window(self, means):
        """Append a whole window of means directly (scripted tests, replays)."""
        for eid, w in means.items():
            self.history[eid].append(float(w))

    def below_streak(self, eid):
        streak = 0
        for w in reversed(self.history.get(eid, [])):
            if w >= self.tau:
                break
            streak += 1
        return streak

    def candidates(self, prunable):
        return [e for e in prunable if self.below_streak(e) >= self.patience]

    def drop(self, eid):
        self.history.pop(eid, None)
        self._sums.pop(eid, None)
        self._counts.pop(eid, None)


def residual_samples(residuals, min_length=8):
    """Arrange (windows, T, V) forecast residuals into profiler samples.

    Each variable's residual over the horizon is one sample. Horizons too
    short to profile fall back to the per-variable series of first-step
    residuals across the (chronological) windows.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.shape[1] >= min_length:
        return np.moveaxis(r, 1, 2).reshape(-1, r.shape[1])
    return r[:, 0, :].T


def mse_loss(pred, target):
    d = pred - Tensor(target)
    return (d * d).mean()


def align_new_expert(model, expert_id, xs, ys, origins, steps=50, lr=1e-3, weight_decay=0.0):
    """Fit only ``expert_id`` and the router head rows on drift windows.

    Returns the loss recorded before each update.
    """
    if not model.expert_parameters(expert_id):
        raise ContractError(f"model has no expert {expert_id!r}")
    targets = model.expert_parameters(expert_id) + model.head_parameters()
    opt = AdamW(lr=lr, weight_decay=weight_decay)
    losses = []
    for _ in range(steps):
        model.zero_grad()
        loss = mse_loss(model(xs, origins), ys)
        backward(loss)
        losses.append(loss.item())
        opt.step(targets)
    model.zero_grad()
    return losses


class ExpertManager:
    """Applies drift events and usage-based pruning to a model.

    Every structural change is appended to ``events`` with a monotone
    ``event_id``.
    """

    def __init__(self, cfg, seed=None):
        self.cfg = cfg
        self.pool_cap = cfg.pool_cap
        self.trackers = None
        self.events = []
        self.training = False
        self.step = 0
        self.alignment_curves = {}
        self._rng = np.random.default_rng([cfg.seed if seed is None else seed, 2])

    def _next_id(self):
        return len(self.events)

    def _trackers(self, model):
        if self.trackers is None:
            self.trackers = [
                UsageTracker(self.cfg.usage_tau, self.cfg.usage_patience, self.cfg.monitor_window)
                for _ in model.layers
            ]
        return self.trackers

    def _select_kind(self, report, model):
        roster = set(model.config.roster)
        if len(roster) == 1:
            # homogeneous pools grow with their own kind only
            return next(iter(roster))
        if self.cfg.selection == "random":
            return str(self._rng.choice(PROFILE_KINDS))
        return report.chosen

    def on_drift(self, model, event, xs, ys, origins, archive=None):
        """Profile the drift windows, grow the pool and align the newcomer.

        ``archive`` holds per-layer hidden states to store for this event.
        """
        if not self.training:
            raise ContractError("structural changes are only allowed during training")
        event.event_id = self._next_id()
        if archive is not None:
            model.archive(archive, event.event_id)
        residuals = residual_samples(ys - model.predict(xs, origins))
        if residuals.shape[-1] >= 8:
            report = profile(residuals)
        else:
            report = ProfilerReport(0.0, 0.0, 0.0, TIE_ORDER[0], True, 0, residuals.shape[-1])
        event.s_trend, event.s_sea, event.s_fluc = report.s_trend, report.s_sea, report.s_fluc
        kind = self._select_kind(report, model)
        event.kind = kind
        event.extra = {"step": self.step, "profiled": report.chosen}
        if report.degenerate:
            event.extra["profile_degenerate"] = True
        if model.drift_count() >= self.pool_cap:
            event.action = "skipped: pool full"
        else:
            eid = model.add_expert(kind, event.event_id)
            steps = self.cfg.align_steps
            lr = self.cfg.align_lr or self.cfg.lr
            losses = align_new_expert(model, eid, xs, ys, origins, steps, lr)
            self.alignment_curves[eid] = losses
            event.action = "added"
            event.expert_id = eid
            if losses:
                event.extra.update(align_first=losses[0], align_last=losses[-1])
            for tr in self._trackers(model):
                tr.drop(eid)
        self.events.append(event.log_record())
        return event

    def after_step(self, model, t=None):
        """Feed the last forward pass's gate usage to the trackers and prune.

        Returns the prune records made this step.
        """
        self.step += 1
        trackers = self._trackers(model)
        pruned = []
        for i, (layer, tr) in enumerate(zip(model.layers, trackers)):
            if layer._last_usage is None or not tr.record(layer._last_usage):
                continue
            tr.close_window()
            if not self.cfg.prune:
                continue
            for eid in tr.candidates(layer.drift_ids()):
                pruned.append(self.prune(model, i, eid, t, streak=tr.below_streak(eid)))
        return pruned

    def prune(self, model, layer_index, expert_id, t=None, streak=None):
        if not self.training:
            raise ContractError("structural changes are only allowed during training")
        tr = self._trackers(model)[layer_index]
        if tr.below_streak(expert_id) < tr.patience:
            raise ContractError(f"{expert_id!r} is not a prune candidate in layer {layer_index}")
        model.remove_expert(layer_index, expert_id)
        tr.drop(expert_id)
        rec = {
            "event_id": self._next_id(),
            "action": "pruned",
            "expert_id": expert_id,
            "kind": expert_id.split("-", 1)[1],
            "layer": layer_index,
            "step": self.step,
        }
        if t is not None:
            rec["t"] = int(t)
        if streak is not None:
            rec["below_windows"] = int(streak)
        self.events.append(rec)
        return rec

    def summary(self):
        adds = sum(1 for e in self.events if e.get("action") == "added")
        prunes = sum(1 for e in self.events if e.get("action") == "pruned")
        return {"drift_events": sum(1 for e in self.events if "mmd2" in e), "added": adds, "pruned": prunes}


def write_event_log(events, path):
    with open(path, "w") as fh:
        for rec in events:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_event_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def report_dict(report):
    return asdict(report)
