"""Static report figures (rendered off-screen to PNG)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def loss_curve(curve, path, events=()):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = [r["epoch"] for r in curve]
    ax.plot(epochs, [r["train_mse"] for r in curve], label="train")
    ax.plot(epochs, [r["val_mse"] for r in curve], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    adds = sum(1 for e in events if e.get("action") == "added")
    prunes = sum(1 for e in events if e.get("action") == "pruned")
    ax.set_title(f"loss curve ({adds} experts added, {prunes} pruned)")
    ax.legend()
    return _save(fig, path)


def prediction_overlay(origins, truth, pred, path, variable=0, name=None):
    """Ground truth and forecasts for one variable over tiled windows."""
    fig, ax = plt.subplots(figsize=(9, 3.5))
    horizon = truth.shape[1]
    for i, (o, y, p) in enumerate(zip(origins, truth, pred)):
        t = range(o + 1, o + 1 + horizon)
        ax.plot(t, y[:, variable], color="tab:blue", lw=1, label="truth" if i == 0 else None)
        ax.plot(t, p[:, variable], color="tab:orange", lw=1, label="forecast" if i == 0 else None)
    ax.set_xlabel("time index")
    ax.set_title(f"test forecasts, {name or f'variable {variable}'}")
    ax.legend()
    return _save(fig, path)


def detector_trace(records, path, shifts=()):
    fig, ax = plt.subplots(figsize=(9, 3.5))
    t = [r["t"] for r in records]
    ax.plot(t, [r["mmd2"] for r in records], marker=".", lw=1, label="MMD$^2$")
    thr = [(r["t"], r["threshold"]) for r in records if r["threshold"] is not None]
    if thr:
        ax.plot(*zip(*thr), ls="--", color="tab:gray", label="threshold")
    hits = [(r["t"], r["mmd2"]) for r in records if r["drift"]]
    if hits:
        ax.scatter(*zip(*hits), color="tab:red", zorder=3, label="drift")
    for s in shifts:
        ax.axvline(s, color="tab:green", lw=0.8, alpha=0.7)
    ax.set_xlabel("time index (end of current window)")
    ax.legend()
    return _save(fig, path)
