"""Central finite-difference gradient checks."""

import numpy as np

from .tensor import Tensor, backward, no_grad


def projected_loss(out, seed=0):
    """Scalar sum(out * R) with a fixed random R so every output matters."""
    r = np.random.default_rng(seed).standard_normal(out.shape)
    return (out * Tensor(r)).sum()


def relative_error(analytic, numeric, floor=1e-6):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(fn, params, h=1e-5, max_entries=None, rng=None, kink_tol=None, stats=None):
    """Compare autodiff gradients of scalar ``fn()`` with central differences.

    Returns the largest component-wise relative error over ``params``. When
    ``max_entries`` is set, a random subset of entries per parameter is probed.
    With ``kink_tol`` set, entries whose forward and backward one-sided slopes
    disagree by more than that relative amount sit on a non-smooth point
    (e.g. a ReLU switching inside the probe interval) and are skipped; their
    count goes to ``stats["skipped"]``.
    """
    for p in params:
        p.grad = None
    loss = fn()
    backward(loss)
    f0 = loss.item()
    worst, skipped = 0.0, 0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.zeros(len(entries))
        smooth = np.ones(len(entries), dtype=bool)
        with no_grad():
            for j, i in enumerate(entries):
                orig = flat[i]
                flat[i] = orig + h
                up = fn().item()
                flat[i] = orig - h
                down = fn().item()
                flat[i] = orig
                numeric[j] = (up - down) / (2 * h)
                if kink_tol is not None:
                    fwd, bwd = (up - f0) / h, (f0 - down) / h
                    smooth[j] = relative_error(fwd, bwd) <= kink_tol
        err = relative_error(analytic.reshape(-1)[entries][smooth], numeric[smooth])
        skipped += int((~smooth).sum())
        worst = max(worst, float(err.max(initial=0.0)))
    if stats is not None:
        stats["skipped"] = stats.get("skipped", 0) + skipped
    return worst
