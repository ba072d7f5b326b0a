"""End-to-end training run that writes every report artifact to a directory."""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import checkpoint, plotting
from .manager import write_event_log
from .model import ForecastModel
from .train import evaluate, train

ARTIFACTS = {
    "checkpoint": "checkpoint.bin",
    "events": "events.jsonl",
    "loss_curve": "loss_curve.csv",
    "metrics": "metrics.json",
    "predictions": "predictions.csv",
    "loss_plot": "loss_curve.png",
    "prediction_plot": "predictions.png",
}


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def metrics_document(cfg, report, model, events):
    return {
        "dataset": cfg.dataset,
        "horizon": cfg.pred_len,
        "mse": report.mse,
        "mae": report.mae,
        "n_windows": report.n_windows,
        "mse_per_horizon": report.mse_per_horizon,
        "mae_per_horizon": report.mae_per_horizon,
        "pool_final": [layer.expert_ids for layer in model.layers],
        "drift_events": sum(1 for e in events if "mmd2" in e),
    }


def tiled(origins, pred_len):
    """Indices of windows whose forecasts tile the split without overlap."""
    return np.arange(0, len(origins), pred_len)


def run_training(cfg, ds, out_dir, data_hash=None, plots=True):
    """Train, evaluate on the test split and write all artifacts.

    Returns the metrics document.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(ForecastModel(cfg), ds)
    model, events = result.model, result.events
    report, pred, truth, origins = evaluate(model, ds, "test", return_predictions=True)
    metrics = metrics_document(cfg, report, model, events)

    checkpoint.save(model, out / ARTIFACTS["checkpoint"], events,
                    extra={"best_epoch": result.best_epoch, "epochs_run": result.epochs_run})
    write_event_log(events, out / ARTIFACTS["events"])
    with open(out / ARTIFACTS["loss_curve"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for r in result.curve:
            w.writerow([r["epoch"], repr(r["train_mse"]), repr(r["val_mse"])])
    keep = tiled(origins, cfg.pred_len)
    cols = ds.columns or tuple(f"x{i}" for i in range(ds.n_vars))
    with open(out / ARTIFACTS["predictions"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "step", "t", "variable", "truth", "prediction"])
        for i in keep:
            for s in range(cfg.pred_len):
                for v, name in enumerate(cols):
                    w.writerow([int(origins[i]), s + 1, int(origins[i]) + s + 1, name,
                                repr(float(truth[i, s, v])), repr(float(pred[i, s, v]))])
    (out / ARTIFACTS["metrics"]).write_text(dumps(metrics))
    if plots:
        plotting.loss_curve(result.curve, out / ARTIFACTS["loss_plot"], events)
        plotting.prediction_overlay(origins[keep], truth[keep], pred[keep],
                                    out / ARTIFACTS["prediction_plot"], 0, cols[0])
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "inputs": {"data_sha256": data_hash, "config_sha256": hashlib.sha256(cfg.to_json().encode()).hexdigest()},
        "outputs": {k: v for k, v in ARTIFACTS.items() if plots or not v.endswith(".png")},
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
    }
    (out / "manifest.json").write_text(dumps(manifest))
    return metrics
