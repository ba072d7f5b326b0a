"""Deterministic binary checkpoints.

Layout: magic, format version, manifest length, a sorted-key JSON manifest
(config, per-layer pool inventory, anomaly repositories, event log, array
table), the raw little-endian float64 parameter payload, and a trailing
SHA-256 of everything before it. Identical models give identical bytes.
"""

import hashlib
import json
import struct

import numpy as np

from .config import Config
from .errors import CheckpointError, ConfigError
from .experts import make_expert
from .model import ForecastModel
from .router import AnomalyRepository
from .tensor import parameter

MAGIC = b"DTMOECKP"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")
_DIGEST = 32


def to_bytes(model, events=(), extra=None):
    arrays, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        arrays.append({"name": name, "shape": list(p.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": VERSION,
        "config": model.config.to_dict(),
        "drift_counter": model._drift_counter,
        "layers": [
            {
                "experts": [
                    {k: e.describe()[k] for k in ("id", "kind", "protected", "created_at")}
                    for e in layer.experts.values()
                ],
                "repository": layer.router.repository.to_dict(),
            }
            for layer in model.layers
        ],
        "events": list(events),
        "arrays": arrays,
        "extra": extra or {},
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    blob = _HEADER.pack(MAGIC, VERSION, len(body)) + body + b"".join(chunks)
    return blob + hashlib.sha256(blob).digest()


def save(model, path, events=(), extra=None):
    data = to_bytes(model, events, extra)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def _parse(data):
    if len(data) < _HEADER.size + _DIGEST:
        raise CheckpointError("checkpoint is truncated")
    blob, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(blob).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    magic, version, mlen = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint format {version}")
    try:
        manifest = json.loads(blob[_HEADER.size : _HEADER.size + mlen])
    except ValueError as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from None
    return manifest, blob[_HEADER.size + mlen :]


def from_bytes(data):
    """Rebuild (model, manifest) from checkpoint bytes."""
    manifest, payload = _parse(data)
    try:
        cfg = Config.from_dict(manifest["config"])
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"checkpoint config invalid: {exc}") from None
    model = ForecastModel(cfg)
    scratch = np.random.default_rng(0)
    for layer, spec in zip(model.layers, manifest["layers"]):
        experts, head = {}, {}
        for e in spec["experts"]:
            if e["id"] in layer.experts:
                experts[e["id"]] = layer.experts[e["id"]]
                head[e["id"]] = layer.router.head[e["id"]]
                continue
            experts[e["id"]] = make_expert(
                e["kind"], cfg.d_model, scratch, expert_id=e["id"], trend_window=cfg.trend_window,
                conv_kernel=cfg.conv_kernel, protected=e["protected"], created_at=e["created_at"],
            )
            head[e["id"]] = parameter(np.zeros(cfg.d_hidden))
        layer.experts = experts
        layer.router.head = head
        layer.router.repository = AnomalyRepository.from_dict(spec["repository"])
    model._drift_counter = manifest["drift_counter"]

    params = dict(model.named_parameters())
    table = {a["name"]: a for a in manifest["arrays"]}
    if set(params) != set(table):
        missing = sorted(set(params) ^ set(table))[:5]
        raise CheckpointError(f"parameter table does not match model structure: {missing}")
    for name, p in params.items():
        a = table[name]
        if tuple(a["shape"]) != p.shape:
            raise CheckpointError(f"shape mismatch for {name}: {a['shape']} vs {p.shape}")
        n = p.size * 8
        chunk = payload[a["offset"] : a["offset"] + n]
        if len(chunk) != n:
            raise CheckpointError(f"payload too short for {name}")
        p.data[...] = np.frombuffer(chunk, dtype="<f8").reshape(p.shape)
    return model, manifest


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return from_bytes(data)
