"""Training loop with drift-triggered adaptation, and evaluation."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from .data import window_arrays
from .drift import DriftDetector
from .manager import ExpertManager, mse_loss
from .optim import AdamW
from .tensor import backward

log = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    mse: float
    mae: float
    n_windows: int
    mse_per_horizon: list = field(default_factory=list)
    mae_per_horizon: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def mse_mae(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} differ in shape")
    err = pred - truth
    per_mse, per_mae = [], []
    if err.ndim == 3:
        per_mse = (err**2).mean(axis=(0, 2)).tolist()
        per_mae = np.abs(err).mean(axis=(0, 2)).tolist()
    n = err.shape[0] if err.ndim >= 2 else err.size
    return MetricsReport(float((err**2).mean()), float(np.abs(err).mean()), int(n), per_mse, per_mae)


def evaluate(model, ds, split="test", batch_size=256, return_predictions=False):
    """Pure forward pass over every window of ``split`` (normalized scale)."""
    cfg = model.config
    xs, ys, origins = window_arrays(ds, cfg.seq_len, cfg.pred_len, split)
    pred = model.predict(xs, origins, batch_size)
    report = mse_mae(pred, ys)
    return (report, pred, ys, origins) if return_predictions else report


def last_value_baseline(ds, seq_len, pred_len, split="test"):
    xs, ys, _ = window_arrays(ds, seq_len, pred_len, split)
    return mse_mae(np.repeat(xs[:, -1:, :], pred_len, axis=1), ys)


def drift_windows(z, lo, event, seq_len, pred_len):
    """Forecast windows whose targets fall inside the event's reference and
    current windows. Look-backs may reach before a window into the stream.

    ``z`` is the normalized stream whose first row has absolute index ``lo``.
    """
    first, last = lo + seq_len - 1, lo + len(z) - 1 - pred_len
    origins = []
    for a, b in (event.ref_bounds, event.cur_bounds):
        span = range(max(a - 1, first), min(b - 1 - pred_len, last) + 1)
        if len(span) == 0:
            span = [min(max(b - 1 - pred_len, first), last)]
        origins.extend(span)
    origins = np.array(sorted(set(origins)), dtype=np.int64)
    rel = origins - lo
    xs = z[rel[:, None] + np.arange(-seq_len + 1, 1)]
    ys = z[rel[:, None] + np.arange(1, pred_len + 1)]
    return xs, ys, origins


def event_state(model, z, lo, t):
    """Per-layer router state for the look-back window ending at ``t``."""
    cfg = model.config
    end = min(max(t - lo, cfg.seq_len - 1), len(z) - 1)
    model.predict(z[end - cfg.seq_len + 1 : end + 1][None], np.array([lo + end]))
    return model.last_hidden()


@dataclass
class TrainResult:
    model: object
    events: list
    curve: list
    best_epoch: int
    epochs_run: int
    best_val: float


def _detection_plan(n_evals, detect_steps):
    """Number of detector evaluations due after each of the first steps."""
    if n_evals <= 0 or detect_steps <= 0:
        return []
    due = [((s + 1) * n_evals) // detect_steps for s in range(detect_steps)]
    return [b - a for a, b in zip([0] + due[:-1], due)]


def train(model, ds):
    cfg = model.config
    rng = np.random.default_rng([cfg.seed, 3])
    xs, ys, origins = window_arrays(ds, cfg.seq_len, cfg.pred_len, "train")
    vxs, vys, vorigins = window_arrays(ds, cfg.seq_len, cfg.pred_len, "val")
    opt = AdamW(cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
    manager = ExpertManager(cfg)
    manager.training = True

    lo, _ = ds.split_range("train")
    z = ds.normalized("train")
    steps_per_epoch = math.ceil(len(xs) / cfg.batch_size)
    scan, plan = None, []
    if cfg.adapt:
        detector = DriftDetector(
            cfg.detector_window, cfg.detector_history, cfg.detector_min_fill,
            cfg.detector_lambda, cfg.detector_clear_on_drift,
        )
        scan = detector.scan(z, start=lo)
        n_evals = max(0, len(z) // cfg.detector_window - 1)
        plan = _detection_plan(n_evals, steps_per_epoch * cfg.detect_epochs)

    curve = []
    best_val, best_epoch, best_blob, wait = math.inf, 0, None, 0
    step = 0
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        changed = False
        order = rng.permutation(len(xs))
        losses = []
        for i in range(0, len(xs), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            model.zero_grad()
            loss = mse_loss(model(xs[idx], origins[idx]), ys[idx])
            backward(loss)
            opt.step(list(model.named_parameters()))
            losses.append(loss.item())
            for rec in manager.after_step(model):
                opt.forget(f"layers.{rec['layer']}.experts.{rec['expert_id']}.")
                opt.forget(f"layers.{rec['layer']}.router.head.{rec['expert_id']}")
                changed = True
                log.info("pruned %s from layer %d at step %d", rec["expert_id"], rec["layer"], step)
            for _ in range(plan[step] if step < len(plan) else 0):
                evaluation, event = next(scan)
                if event is None:
                    continue
                dx, dy, do = drift_windows(z, lo, event, cfg.seq_len, cfg.pred_len)
                state = event_state(model, z, lo, event.t)
                event = manager.on_drift(model, event, dx, dy, do, archive=state)
                changed = changed or event.action == "added"
                log.info("drift at t=%d (mmd2=%.4g > %.4g): %s %s", event.t, event.mmd2,
                         event.threshold, event.action, event.expert_id or "")
            step += 1
        model.zero_grad()
        val = mse_mae(model.predict(vxs, vorigins), vys).mse
        train_mse = float(np.mean(losses))
        curve.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val})
        log.info("epoch %d train %.5f val %.5f pool %s", epoch, train_mse, val, model.pool_sizes())
        if changed or val < best_val:
            # a structural change invalidates older snapshots: they would not
            # match the event log
            best_val, best_epoch, best_blob, wait = val, epoch, checkpoint.to_bytes(model), 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    manager.training = False
    best, _ = checkpoint.from_bytes(best_blob)
    return TrainResult(best, manager.events, curve, best_epoch, epoch, best_val)
