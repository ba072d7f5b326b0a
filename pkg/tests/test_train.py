import math

import numpy as np
import pytest

from dyntmoe import checkpoint
from dyntmoe.data import build_dataset, window_arrays
from dyntmoe.drift import DriftEvent
from dyntmoe.model import ForecastModel
from dyntmoe.nn import param_digest
from dyntmoe.train import (
    _detection_plan,
    drift_windows,
    evaluate,
    last_value_baseline,
    mse_mae,
    train,
)
from helpers import micro_config, shifted_stream, small_config


def test_mse_mae_examples():
    r = mse_mae([1.0, 1.0], [0.0, 2.0])
    assert (r.mse, r.mae) == (1.0, 1.0)
    z = mse_mae(np.ones((2, 3, 1)), np.ones((2, 3, 1)))
    assert (z.mse, z.mae, z.n_windows) == (0.0, 0.0, 2)


def test_mse_mae_homogeneity(rng):
    p, t = rng.standard_normal((4, 5, 2)), rng.standard_normal((4, 5, 2))
    a = mse_mae(p, t)
    b = mse_mae(t + 3.0 * (p - t), t)
    assert b.mae == pytest.approx(3 * a.mae) and b.mse == pytest.approx(9 * a.mse)
    assert np.mean(a.mse_per_horizon) == pytest.approx(a.mse)


def test_mse_mae_shape_mismatch():
    with pytest.raises(ValueError):
        mse_mae(np.zeros(3), np.zeros(4))


def test_detection_plan_spreads_evaluations():
    plan = _detection_plan(7, 10)
    assert sum(plan) == 7 and max(plan) == 1
    assert sum(_detection_plan(25, 10)) == 25
    assert _detection_plan(0, 10) == []


def test_drift_windows_targets_inside_event_windows():
    z = np.arange(400, dtype=float)[:, None]
    ev = DriftEvent(t=299, mmd2=1, threshold=0, ref_bounds=(100, 148), cur_bounds=(252, 300))
    xs, ys, origins = drift_windows(z, 0, ev, 24, 8)
    for x, y, o in zip(xs, ys, origins):
        assert x[-1, 0] == o and y[0, 0] == o + 1
        first, last = y[0, 0], y[-1, 0]
        assert (100 <= first and last < 148) or (252 <= first and last < 300)
    assert len(origins) == 2 * (48 - 8 + 1)


def test_drift_windows_short_event_window_fallback():
    z = np.arange(300, dtype=float)[:, None]
    ev = DriftEvent(t=199, mmd2=1, threshold=0, ref_bounds=(0, 4), cur_bounds=(196, 200))
    xs, ys, origins = drift_windows(z, 0, ev, 8, 6)
    assert list(origins) == [7, 193]
    assert ys[1, -1, 0] == 199


def _dataset(n=160, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    vals = np.stack([np.sin(2 * np.pi * t / 8), np.cos(2 * np.pi * t / 12)], 1) + 0.05 * rng.standard_normal((n, 2))
    return build_dataset(vals, (0.6, 0.2, 0.2))


def test_tiny_overfit():
    cfg = micro_config(epochs=300, patience=300, adapt=False, lr=1e-2, weight_decay=0.0)
    vals = np.sin(np.arange(60) * 0.7)[:, None] * np.array([1.0, -0.5]) + np.arange(60)[:, None] * 0.01
    ds = build_dataset(vals, (18, 21, 21))
    xs, ys, os = window_arrays(ds, cfg.seq_len, cfg.pred_len, "train")
    assert len(xs) == 8
    res = train(ForecastModel(cfg), ds)
    final = evaluate(res.model, ds, "train").mse
    assert final < 1e-2


def test_static_run_has_no_events_and_early_stops():
    cfg = small_config(epochs=40, patience=2, adapt=False, lr=3e-2)
    res = train(ForecastModel(cfg), _dataset(300))
    assert res.events == []
    assert res.epochs_run <= res.best_epoch + cfg.patience
    assert len(res.curve) == res.epochs_run


def test_adaptive_run_logs_consistent_structure():
    cfg = small_config(epochs=2, monitor_window=3, usage_patience=1, usage_tau=0.2, align_steps=3)
    ds = shifted_stream(0)
    res = train(ForecastModel(cfg), ds)
    adds = sum(e["action"] == "added" for e in res.events)
    prunes = sum(e["action"] == "pruned" for e in res.events)
    assert adds >= 1
    assert res.model.drift_count() == adds - prunes
    ids = [e["event_id"] for e in res.events]
    assert ids == list(range(len(ids)))
    assert all(e["t"] >= 0 and "s_trend" in e for e in res.events if e["action"] != "pruned")
    assert res.model.layers[0].router.repository.event_ids == [
        e["event_id"] for e in res.events if "mmd2" in e
    ][-cfg.repo_capacity:]


def test_training_is_deterministic():
    cfg = small_config(epochs=2)
    ds = shifted_stream(1)
    a, b = train(ForecastModel(cfg), ds), train(ForecastModel(cfg), ds)
    assert checkpoint.to_bytes(a.model, a.events) == checkpoint.to_bytes(b.model, b.events)
    assert a.curve == b.curve


def test_evaluate_is_pure():
    cfg = small_config()
    ds = _dataset(300)
    model = ForecastModel(cfg)
    before = param_digest(model.named_parameters())
    r1, r2 = evaluate(model, ds), evaluate(model, ds)
    assert r1 == r2 and param_digest(model.named_parameters()) == before
    assert r1.n_windows == len(window_arrays(ds, cfg.seq_len, cfg.pred_len, "test")[0])


def test_last_value_baseline():
    ds = _dataset(300)
    r = last_value_baseline(ds, 24, 8)
    assert r.mse > 0 and math.isfinite(r.mse)
