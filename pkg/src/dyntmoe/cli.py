"""Command-line interface: gen | train | eval | detect | profile.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 checkpoint error.
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, plotting
from .config import PRESETS, Config, parse_override
from .data import RegimeScript, generate_stream, load_csv, save_csv, shifts_sidecar
from .drift import DriftDetector
from .errors import CheckpointError, ConfigError, DataError, DynTMoEError, ParameterError
from .manager import profile
from .pipeline import dumps, file_sha256, run_training
from .train import evaluate

SEED_ENV = "DYNTMOE_SEED"
EXIT_CONFIG, EXIT_DATA, EXIT_CHECKPOINT = 2, 3, 4

log = logging.getLogger("dyntmoe")

_FLAG_FIELDS = [f.name for f in dataclasses.fields(Config) if f.name != "extra"]


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{what} not found: {path}") from None
    except ValueError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def build_config(args):
    """defaults < preset < config file < per-key flags < --set; returns (cfg, explicit keys)."""
    values = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; known: {', '.join(sorted(PRESETS))}")
        values.update(PRESETS[args.preset])
    if args.config:
        doc = _read_json(args.config, "config file")
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        if isinstance(doc.get("config"), dict):  # a run manifest
            doc = doc["config"]
        values.update(doc)
    for name in _FLAG_FIELDS:
        raw = getattr(args, f"cfg_{name}", None)
        if raw is not None:
            values.update([parse_override(f"{name}={raw}")])
    for item in args.set or []:
        values.update([parse_override(item)])
    if getattr(args, "no_adapt", False):
        values["adapt"] = False
    if "seed" not in values:
        seed = _env_seed()
        if seed is not None:
            values["seed"] = seed
    explicit = set(values)
    cfg = Config.from_dict({**Config().to_dict(), **values})
    return cfg, explicit


# -- subcommands ------------------------------------------------------------

def cmd_gen(args):
    spec = _read_json(args.script, "regime script")
    try:
        if not isinstance(spec, dict):
            raise ParameterError("regime script must be a JSON object")
        if args.seed is not None:
            spec["seed"] = args.seed
        elif "seed" not in spec and _env_seed() is not None:
            spec["seed"] = _env_seed()
        script = RegimeScript.from_dict(spec)
        ds = generate_stream(script)
    except ParameterError as exc:
        raise ConfigError(f"malformed regime script: {exc}") from None
    save_csv(ds, args.out)
    shifts_sidecar(args.out).write_text(json.dumps({"shift_indices": list(ds.shift_indices)}) + "\n")
    print(json.dumps({"rows": len(ds), "n_vars": ds.n_vars, "shift_indices": list(ds.shift_indices),
                      "csv": str(args.out)}))
    return 0


def cmd_train(args):
    cfg, explicit = build_config(args)
    ds = load_csv(args.data, split=cfg.split)
    if ds.n_vars != cfg.n_vars:
        if "n_vars" in explicit:
            raise DataError(f"config expects {cfg.n_vars} variables, data has {ds.n_vars}")
        cfg = cfg.replace(n_vars=ds.n_vars)
    if "dataset" not in explicit:
        cfg = cfg.replace(dataset=Path(args.data).stem)
    metrics = run_training(cfg, ds, args.out, data_hash=file_sha256(args.data), plots=not args.no_plots)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_eval(args):
    model, manifest = checkpoint.load(args.checkpoint)
    cfg = model.config
    ds = load_csv(args.data, split=cfg.split)
    if ds.n_vars != cfg.n_vars:
        raise DataError(f"checkpoint expects {cfg.n_vars} variables, data has {ds.n_vars}")
    report = evaluate(model, ds, args.split)
    doc = {
        "dataset": cfg.dataset,
        "split": args.split,
        "horizon": cfg.pred_len,
        "mse": report.mse,
        "mae": report.mae,
        "n_windows": report.n_windows,
        "mse_per_horizon": report.mse_per_horizon,
        "mae_per_horizon": report.mae_per_horizon,
        "pool_final": [layer.expert_ids for layer in model.layers],
    }
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_detect(args):
    ds = load_csv(args.data)
    try:
        det = DriftDetector(args.window, args.history, args.min_fill, args.lam, args.clear_on_drift)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    z = ds.normalized()
    if len(z) < 2 * args.window:
        raise DataError(f"stream has {len(z)} rows; need at least {2 * args.window}")
    records = []
    for ev, event in det.scan(z):
        rec = {"t": ev.t, "mmd2": ev.mmd2, "threshold": ev.threshold, "drift": ev.drift}
        if event is not None:
            rec["ref_bounds"] = list(event.ref_bounds)
            rec["cur_bounds"] = list(event.cur_bounds)
        records.append(rec)
        print(json.dumps(rec, sort_keys=True))
    if args.plot:
        plotting.detector_trace(records, args.plot, ds.shift_indices)
    return 0


def _read_residuals(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such residual file: {path}")
    rows = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise DataError(f"{path}: row {lineno} has a non-numeric cell") from None
    if not rows:
        raise DataError(f"{path}: no residual rows")
    if len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: rows have different lengths")
    if len(rows[0]) < 8:
        raise DataError(f"{path}: need >= 8 residual values per row, got {len(rows[0])}")
    return np.array(rows)


def cmd_profile(args):
    report = profile(_read_residuals(args.residuals))
    print(json.dumps(dataclasses.asdict(report), sort_keys=True))
    return 0


# -- parser -----------------------------------------------------------------

def _add_config_flags(p):
    p.add_argument("--config", help="JSON config (or a run manifest.json)")
    p.add_argument("--preset", help="named preset, e.g. etth1-96")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    group = p.add_argument_group("config keys")
    for name in _FLAG_FIELDS:
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}", metavar="V")


def build_parser():
    parser = argparse.ArgumentParser(prog="dyntmoe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic regime stream")
    p.add_argument("script", help="regime script JSON")
    p.add_argument("out", help="output CSV")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write run artifacts")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--no-adapt", action="store_true", help="disable drift adaptation")
    p.add_argument("--no-plots", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; prints metrics JSON")
    p.add_argument("checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="run the drift detector; prints JSON lines")
    p.add_argument("data")
    p.add_argument("--window", type=int, default=96)
    p.add_argument("--history", type=int, default=50)
    p.add_argument("--min-fill", type=int, default=10)
    p.add_argument("--lam", type=float, default=3.0)
    p.add_argument("--clear-on-drift", action="store_true")
    p.add_argument("--plot", help="write a score/threshold figure to this PNG")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("profile", help="score a residual CSV (one sample per row)")
    p.add_argument("residuals")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DynTMoEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
