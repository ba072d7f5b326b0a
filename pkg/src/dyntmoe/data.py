"""Series loading, synthetic regime streams, windowing and patch embedding."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .nn import Linear, Module
from .tensor import Tensor, matmul

SPLITS = ("train", "val", "test")
ETTH_SPLIT = (8545, 2881, 2881)


@dataclass(frozen=True)
class SeriesDataset:
    values: np.ndarray
    timestamps: tuple
    split_bounds: tuple
    norm_mean: np.ndarray
    norm_std: np.ndarray
    columns: tuple = ()
    shift_indices: tuple = ()

    @property
    def n_vars(self):
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def split_range(self, split):
        train_end, val_end = self.split_bounds
        if split == "train":
            return 0, train_end
        if split == "val":
            return train_end, val_end
        if split == "test":
            return val_end, len(self)
        raise ParameterError(f"unknown split {split!r}")

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.norm_mean) / self.norm_std

    def denormalize(self, z):
        return np.asarray(z, dtype=np.float64) * self.norm_std + self.norm_mean

    def normalized(self, split=None):
        lo, hi = (0, len(self)) if split is None else self.split_range(split)
        return self.normalize(self.values[lo:hi])


def build_dataset(values, split=(0.6, 0.2, 0.2), timestamps=None, columns=(), shift_indices=()):
    """Wrap a T x V matrix, resolve the split and fit train-only z-scores.

    ``split`` is either three fractions summing to 1 or three row counts.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 3:
        raise DataError(f"expected a T x V matrix with T >= 3, got shape {values.shape}")
    n = values.shape[0]
    train_end, val_end = _resolve_split(n, split)
    train = values[:train_end]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    const = np.flatnonzero(std <= 0)
    if const.size:
        names = [columns[i] if i < len(columns) else str(i) for i in const]
        raise DataError(f"constant column(s) in the train split: {', '.join(names)}")
    if timestamps is None:
        timestamps = tuple(str(i) for i in range(n))
    return SeriesDataset(
        values=values,
        timestamps=tuple(timestamps),
        split_bounds=(train_end, val_end),
        norm_mean=mean,
        norm_std=std,
        columns=tuple(columns),
        shift_indices=tuple(int(s) for s in shift_indices),
    )


def _resolve_split(n, split):
    split = tuple(split)
    if len(split) != 3:
        raise ParameterError(f"split needs three entries, got {split}")
    if all(isinstance(s, (int, np.integer)) for s in split) and sum(split) > 3:
        counts = [int(s) for s in split]
        if sum(counts) > n:
            raise DataError(f"split counts {counts} exceed the {n} available rows")
        train_end, val_end = counts[0], counts[0] + counts[1]
    else:
        fr = [float(s) for s in split]
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ParameterError(f"split fractions must be >= 0 and sum to 1, got {fr}")
        train_end = int(round(n * fr[0]))
        val_end = int(round(n * (fr[0] + fr[1])))
    if not 0 < train_end < val_end <= n:
        raise DataError(f"degenerate split bounds ({train_end}, {val_end}) for {n} rows")
    return train_end, val_end


def load_csv(path, split=(0.6, 0.2, 0.2), min_rows=3):
    """Read an ETT-style CSV: header row, label column, then float columns."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a label column and at least one value column")
        columns = tuple(h.strip() for h in header[1:])
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            parsed = []
            for col, cell in enumerate(row[1:], start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col} ({header[col]!r}): "
                        f"cannot parse {cell!r} as a number"
                    ) from None
            labels.append(row[0])
            rows.append(parsed)
    if len(rows) < min_rows:
        raise DataError(f"{path}: {len(rows)} rows, need at least {min_rows}")
    shifts = ()
    sidecar = shifts_sidecar(path)
    if sidecar.is_file():
        shifts = tuple(json.loads(sidecar.read_text())["shift_indices"])
    return build_dataset(np.array(rows), split, labels, columns, shifts)


def shifts_sidecar(csv_path):
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".shifts.json")


def save_csv(ds, path):
    path = Path(path)
    cols = ds.columns or tuple(f"x{i}" for i in range(ds.n_vars))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date",) + tuple(cols))
        for label, row in zip(ds.timestamps, ds.values):
            w.writerow([label] + [repr(float(v)) for v in row])


# -- synthetic regimes -------------------------------------------------------

SEGMENT_KINDS = ("level", "trend", "seasonal", "ar1", "noise")
SEGMENT_PARAMS = ("mean", "slope", "amplitude", "period", "phase", "ar", "noise_std")


@dataclass(frozen=True)
class Segment:
    """One regime. Every variable follows

        mean + slope*t + amplitude*sin(2*pi*t/period + phase) + e_t,
        e_t = ar*e_{t-1} + noise_std*xi_t

    with t local to the segment. ``kind`` labels the regime; each param may be
    a scalar or a per-variable list.
    """

    length: int
    kind: str = "noise"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RegimeScript:
    segments: tuple
    seed: int = 0
    n_vars: int = 1
    split: tuple = (0.6, 0.2, 0.2)

    @classmethod
    def from_dict(cls, spec):
        if not isinstance(spec, dict):
            raise ParameterError("regime script must be a mapping")
        unknown = set(spec) - {"segments", "seed", "n_vars", "split"}
        if unknown:
            raise ParameterError(f"unknown regime script keys: {sorted(unknown)}")
        segs = []
        for i, s in enumerate(spec.get("segments") or []):
            if not isinstance(s, dict) or "length" not in s:
                raise ParameterError(f"segment {i} needs a length")
            extra = set(s) - {"length", "kind", "params"}
            if extra:
                raise ParameterError(f"segment {i}: unknown keys {sorted(extra)}")
            segs.append(Segment(int(s["length"]), s.get("kind", "noise"), dict(s.get("params") or {})))
        return cls(
            segments=tuple(segs),
            seed=int(spec.get("seed", 0)),
            n_vars=int(spec.get("n_vars", 1)),
            split=tuple(spec.get("split", (0.6, 0.2, 0.2))),
        )

    @property
    def length(self):
        return sum(s.length for s in self.segments)

    @property
    def shift_indices(self):
        return tuple(int(i) for i in np.cumsum([s.length for s in self.segments])[:-1])


def _param(params, name, n_vars, default):
    v = np.asarray(params.get(name, default), dtype=np.float64)
    if v.ndim == 0:
        return np.full(n_vars, float(v))
    if v.shape != (n_vars,):
        raise ParameterError(f"param {name!r} needs {n_vars} values, got {v.tolist()}")
    return v


def generate_values(script):
    if not script.segments:
        raise ParameterError("regime script has no segments")
    if script.n_vars < 1:
        raise ParameterError("n_vars must be >= 1")
    rng = np.random.default_rng(script.seed)
    v = script.n_vars
    parts = []
    for i, seg in enumerate(script.segments):
        if seg.kind not in SEGMENT_KINDS:
            raise ParameterError(f"segment {i}: unknown kind {seg.kind!r}; use one of {SEGMENT_KINDS}")
        if seg.length < 1:
            raise ParameterError(f"segment {i}: length must be >= 1")
        bad = set(seg.params) - set(SEGMENT_PARAMS)
        if bad:
            raise ParameterError(f"segment {i}: unknown params {sorted(bad)}")
        p = seg.params
        t = np.arange(seg.length, dtype=np.float64)[:, None]
        period = _param(p, "period", v, 24.0)
        if np.any(period <= 0):
            raise ParameterError(f"segment {i}: period must be positive")
        ar = _param(p, "ar", v, 0.0)
        if np.any(np.abs(ar) >= 1):
            raise ParameterError(f"segment {i}: |ar| must be < 1")
        base = (
            _param(p, "mean", v, 0.0)
            + _param(p, "slope", v, 0.0) * t
            + _param(p, "amplitude", v, 0.0) * np.sin(2 * np.pi * t / period + _param(p, "phase", v, 0.0))
        )
        shocks = rng.standard_normal((seg.length, v)) * _param(p, "noise_std", v, 1.0)
        e = np.empty_like(shocks)
        prev = np.zeros(v)
        for j in range(seg.length):
            prev = ar * prev + shocks[j]
            e[j] = prev
        parts.append(base + e)
    return np.concatenate(parts, axis=0)


def generate_stream(script):
    """Deterministic synthetic stream with ground-truth shift indices."""
    values = generate_values(script)
    cols = tuple(f"x{i}" for i in range(script.n_vars))
    return build_dataset(values, script.split, None, cols, script.shift_indices)


# -- windows -----------------------------------------------------------------

@dataclass(frozen=True)
class ForecastWindow:
    input: np.ndarray
    target: np.ndarray
    origin: int


def window_count(ds, seq_len, pred_len, split):
    lo, hi = ds.split_range(split)
    return hi - lo - seq_len - pred_len + 1


def window_arrays(ds, seq_len, pred_len, split):
    """All stride-1 windows of one split as stacked (inputs, targets, origins).

    Inputs/targets are z-scored with the train statistics. ``origin`` is the
    absolute index of the last look-back step.
    """
    if seq_len < 1 or pred_len < 1:
        raise ParameterError("seq_len and pred_len must be >= 1")
    lo, hi = ds.split_range(split)
    n = window_count(ds, seq_len, pred_len, split)
    if n < 1:
        raise DataError(
            f"{split} split has {hi - lo} points; need at least {seq_len + pred_len}"
        )
    z = ds.normalized(split)
    starts = np.arange(n)
    x_idx = starts[:, None] + np.arange(seq_len)
    y_idx = starts[:, None] + seq_len + np.arange(pred_len)
    return z[x_idx], z[y_idx], lo + starts + seq_len - 1


def make_windows(ds, seq_len, pred_len, split):
    xs, ys, origins = window_arrays(ds, seq_len, pred_len, split)
    for x, y, o in zip(xs, ys, origins):
        yield ForecastWindow(x, y, int(o))


# -- patching ---------------------------------------------------------------

def patch_count(seq_len, patch_len, stride):
    if patch_len > seq_len:
        raise ParameterError(f"patch length {patch_len} exceeds look-back {seq_len}")
    if patch_len < 1 or stride < 1:
        raise ParameterError("patch length and stride must be >= 1")
    return (seq_len - patch_len) // stride + 1


def patch_index(seq_len, patch_len, stride):
    n = patch_count(seq_len, patch_len, stride)
    return np.arange(n)[:, None] * stride + np.arange(patch_len)


def embed_patches(x, patch_len, stride, weight, bias):
    """Channel-independent patching + linear projection.

    ``x`` is (..., L, V); returns (..., V, N, D). ``weight`` is (P, D).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    L = x.shape[-2]
    idx = patch_index(L, patch_len, stride)
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    per_var = x.transpose(*axes)  # (..., V, L)
    patches = per_var[..., idx]  # (..., V, N, P)
    return matmul(patches, weight) + bias


class PatchEmbedding(Module):
    def __init__(self, patch_len, stride, d_model, rng):
        self.patch_len = patch_len
        self.stride = stride
        self.proj = Linear(patch_len, d_model, rng)

    def __call__(self, x):
        return embed_patches(x, self.patch_len, self.stride, self.proj.weight, self.proj.bias)
