import math

import numpy as np

from dyntmoe.config import Config
from dyntmoe.data import RegimeScript, generate_stream
from dyntmoe.drift import DriftEvent


def micro_config(**kw):
    base = dict(seq_len=8, pred_len=3, n_vars=2, patch_len=4, stride=2, d_model=4, d_hidden=4,
                top_k=4, cycle_len=5, batch_size=8, epochs=2, detector_window=24,
                detector_min_fill=3, monitor_window=5, align_steps=5)
    base.update(kw)
    return Config(**base).validate()


def small_config(**kw):
    base = dict(seq_len=24, pred_len=8, n_vars=2, patch_len=8, stride=4, d_model=4, d_hidden=4,
                top_k=2, cycle_len=24, batch_size=32, epochs=2, detector_window=48,
                detector_min_fill=5, align_steps=5)
    base.update(kw)
    return Config(**base).validate()


def shifted_stream(seed=0, n=1200, n_vars=2, shift=3.0):
    half = n // 2
    return generate_stream(RegimeScript.from_dict({
        "seed": seed, "n_vars": n_vars, "segments": [
            {"length": half, "kind": "seasonal", "params": {"amplitude": 1.0, "period": 12, "noise_std": 0.3}},
            {"length": n - half, "kind": "level", "params": {"mean": shift, "noise_std": 0.3}},
        ]}))


def fake_event(t=100):
    return DriftEvent(t=t, mmd2=1.0, threshold=0.5, ref_bounds=(0, 48), cur_bounds=(t - 47, t + 1))


def random_windows(cfg, n=6, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((n, cfg.seq_len, cfg.n_vars))
    ys = rng.standard_normal((n, cfg.pred_len, cfg.n_vars))
    return xs, ys, np.arange(n)


def naive_k(x, y, sigma):
    return math.exp(-sum((a - b) ** 2 for a, b in zip(x, y)) / (2 * sigma**2))


def naive_biased(X, Y, sigma):
    m, n = len(X), len(Y)
    xx = sum(naive_k(a, b, sigma) for a in X for b in X) / m**2
    xy = sum(naive_k(a, b, sigma) for a in X for b in Y) / (m * n)
    yy = sum(naive_k(a, b, sigma) for a in Y for b in Y) / n**2
    return xx - 2 * xy + yy


def naive_unbiased(X, Y, sigma):
    m, n = len(X), len(Y)
    xx = sum(naive_k(X[i], X[j], sigma) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    yy = sum(naive_k(Y[i], Y[j], sigma) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    xy = sum(naive_k(a, b, sigma) for a in X for b in Y) / (m * n)
    return xx + yy - 2 * xy
