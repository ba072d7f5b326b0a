"""Run configuration: one flat dataclass so every key maps to ``--set key=value``."""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .experts import EXPERT_KINDS
from .router import ROUTER_KINDS

SELECTION_MODES = ("profiler", "random")


@dataclass
class Config:
    # data and patching
    seq_len: int = 96
    pred_len: int = 96
    n_vars: int = 7
    patch_len: int = 48
    stride: int = 12
    split: tuple = (0.6, 0.2, 0.2)
    # architecture
    d_model: int = 16
    d_hidden: int = 16
    top_k: int = 3
    n_layers: int = 1
    roster: tuple = EXPERT_KINDS
    trend_window: int = 3
    conv_kernel: int = 3
    cycle_len: int = 24
    router: str = "gru"
    use_memory: bool = True
    use_relation: bool = True
    repo_capacity: int = 16
    memory_temperature: float = 1.0
    # optimisation
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    patience: int = 10
    # drift detection
    adapt: bool = True
    detector_window: int = 96
    detector_history: int = 50
    detector_min_fill: int = 10
    detector_lambda: float = 3.0
    detector_clear_on_drift: bool = False
    detect_epochs: int = 1
    # expert management
    pool_cap: int = 3
    selection: str = "profiler"
    usage_tau: float = 0.02
    usage_patience: int = 3
    monitor_window: int = 200
    prune: bool = True
    align_steps: int = 50
    align_lr: float = None
    seed: int = 0
    dataset: str = "synthetic"
    extra: dict = field(default_factory=dict)

    @property
    def n_patches(self):
        return (self.seq_len - self.patch_len) // self.stride + 1

    def validate(self):
        positive = (
            "seq_len", "pred_len", "n_vars", "patch_len", "stride", "d_model", "d_hidden",
            "top_k", "n_layers", "trend_window", "conv_kernel", "cycle_len", "repo_capacity",
            "batch_size", "epochs", "patience", "detector_window", "detector_history",
            "detector_min_fill", "usage_patience", "monitor_window",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("lr", "detector_lambda", "memory_temperature", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.pool_cap < 0 or self.align_steps < 0 or self.weight_decay < 0:
            raise ConfigError("pool_cap, align_steps and weight_decay must be non-negative")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even, got {self.d_model}")
        if self.patch_len > self.seq_len:
            raise ConfigError(f"patch_len {self.patch_len} exceeds seq_len {self.seq_len}")
        if not self.roster:
            raise ConfigError("roster must name at least one expert kind")
        bad = [k for k in self.roster if k not in EXPERT_KINDS]
        if bad:
            raise ConfigError(f"unknown expert kinds {bad}; expected {EXPERT_KINDS}")
        if self.top_k > len(self.roster):
            raise ConfigError(f"top_k {self.top_k} exceeds the base roster size {len(self.roster)}")
        if self.trend_window > self.n_patches:
            raise ConfigError(f"trend_window {self.trend_window} exceeds {self.n_patches} patches")
        if self.router not in ROUTER_KINDS:
            raise ConfigError(f"router must be one of {ROUTER_KINDS}, got {self.router!r}")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"selection must be one of {SELECTION_MODES}, got {self.selection!r}")
        if self.detector_min_fill > self.detector_history:
            raise ConfigError("detector_min_fill exceeds detector_history")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ConfigError("betas must lie in (0, 1)")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["split"] = list(self.split)
        d["roster"] = list(self.roster)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        d = dict(d)
        for key in ("split", "roster"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d).validate()

    def replace(self, **changes):
        return Config.from_dict({**self.to_dict(), **changes})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}


def parse_override(text):
    """'key=value' -> (key, typed value) using the field's declared type."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return key, low in ("true", "1", "yes")
        if kind is int:
            return key, int(raw)
        if kind is float:
            return key, None if raw.strip().lower() == "none" else float(raw)
        if kind is tuple:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if key == "split":
                if all(p.isdigit() for p in parts):
                    return key, tuple(int(p) for p in parts)
                return key, tuple(float(p) for p in parts)
            return key, tuple(parts)
        if kind is dict:
            return key, json.loads(raw)
        return key, raw
    except (ValueError, json.JSONDecodeError):
        raise ConfigError(f"cannot parse {raw!r} for {key} ({kind.__name__})") from None


# Per-dataset settings from the published hyperparameter table (ETT family).
# Dropout and multi-layer router RNNs are not modelled.
_ETT_ROWS = {
    "etth1": [(96, 48, 12, 1.2e-3, 2), (192, 48, 12, 8e-4, 2), (336, 48, 12, 4e-4, 1), (720, 48, 12, 4e-4, 1)],
    "etth2": [(96, 24, 6, 8e-4, 2), (192, 24, 6, 4e-4, 2), (336, 24, 6, 4e-4, 2), (720, 24, 6, 4e-4, 2)],
    "ettm1": [(96, 48, 12, 4e-4, 2), (192, 48, 12, 4e-4, 2), (336, 24, 12, 1.6e-3, 2), (720, 48, 12, 4e-4, 2)],
    "ettm2": [(96, 48, 6, 8e-4, 2), (192, 48, 6, 8e-4, 1), (336, 48, 6, 4e-4, 1), (720, 24, 12, 1.2e-3, 1)],
}

PRESETS = {
    f"{name}-{t}": dict(
        dataset=name, seq_len=96, pred_len=t, n_vars=7, patch_len=p, stride=s,
        lr=lr, n_layers=layers, batch_size=256, cycle_len=24,
    )
    for name, rows in _ETT_ROWS.items()
    for t, p, s, lr, layers in rows
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return Config.from_dict({**PRESETS[name], **overrides})
