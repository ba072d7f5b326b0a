"""MMD-based distribution shift detection.

A fixed reference window is compared against successive non-overlapping
current windows with the biased (V-statistic) squared MMD under an RBF
kernel whose bandwidth comes from the median pairwise distance of the
reference. A score is flagged when it exceeds mean + lambda * std of the
recent score history.
"""

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, ParameterError


def rbf_kernel(x, y, sigma):
    if sigma <= 0:
        raise ParameterError(f"bandwidth must be positive, got {sigma}")
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-np.dot(d.ravel(), d.ravel()) / (2.0 * sigma * sigma)))


def _samples(x):
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def sq_dists(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def lower_median(values):
    d = np.sort(np.asarray(values, dtype=np.float64).ravel())
    return float(d[(d.size - 1) // 2])


def median_bandwidth(reference):
    """Lower median of the pairwise Euclidean distances of ``reference``.

    A zero median falls back to the smallest positive distance, or 1.0 when
    every sample coincides.
    """
    ref = _samples(reference)
    n = ref.shape[0]
    if n < 2:
        raise DataError(f"median heuristic needs >= 2 samples, got {n}")
    iu = np.triu_indices(n, k=1)
    d = np.sqrt(sq_dists(ref, ref)[iu])
    med = lower_median(d)
    if med > 0:
        return med
    pos = d[d > 0]
    return float(pos[0]) if pos.size else 1.0


def _kmat(a, b, sigma):
    return np.exp(-sq_dists(a, b) / (2.0 * sigma * sigma))


def _ordered_sum(k):
    # sorting first makes the sum independent of operand orientation
    return np.sort(k, axis=None).sum()


def _check_pair(ref, cur):
    if ref.shape[0] < 2 or cur.shape[0] < 2:
        raise DataError(
            f"window pair needs >= 2 samples per side, got {ref.shape[0]} and {cur.shape[0]}"
        )
    if ref.shape[1] != cur.shape[1]:
        raise DataError(f"sample dimensions differ: {ref.shape[1]} vs {cur.shape[1]}")


def mmd_squared_biased(reference, current, sigma):
    """Squared MMD with all diagonal kernel terms kept (never negative)."""
    ref, cur = _samples(reference), _samples(current)
    _check_pair(ref, cur)
    nr, nc = ref.shape[0], cur.shape[0]
    within = _ordered_sum(_kmat(ref, ref, sigma)) / (nr * nr) + _ordered_sum(
        _kmat(cur, cur, sigma)
    ) / (nc * nc)
    cross = _ordered_sum(_kmat(ref, cur, sigma)) / (nr * nc)
    return float(within - 2.0 * cross)


def mmd_squared_unbiased(reference, current, sigma):
    """U-statistic estimate of squared MMD; may be negative."""
    ref, cur = _samples(reference), _samples(current)
    _check_pair(ref, cur)
    nr, nc = ref.shape[0], cur.shape[0]
    kxx, kyy = _kmat(ref, ref, sigma), _kmat(cur, cur, sigma)
    xx = (_ordered_sum(kxx) - np.trace(kxx)) / (nr * (nr - 1))
    yy = (_ordered_sum(kyy) - np.trace(kyy)) / (nc * (nc - 1))
    cross = _ordered_sum(_kmat(ref, cur, sigma)) / (nr * nc)
    return float(xx + yy - 2.0 * cross)


def concentration_bound(n_s, n_t, delta, kernel_bound=1.0):
    """Deviation bound on the empirical MMD holding with prob. >= 1 - delta."""
    k = kernel_bound
    return 2.0 * math.sqrt(k) * (1 / math.sqrt(n_s) + 1 / math.sqrt(n_t)) + math.sqrt(
        2.0 * k * math.log(2.0 / delta) / min(n_s, n_t)
    )


class ScoreHistory:
    """Ring buffer of the most recent scores."""

    def __init__(self, capacity=50, min_fill=10):
        if capacity < 1 or not 1 <= min_fill <= capacity:
            raise ParameterError(f"need 1 <= min_fill <= capacity, got {min_fill}, {capacity}")
        self.capacity = capacity
        self.min_fill = min_fill
        self._buf = deque(maxlen=capacity)

    def append(self, score):
        self._buf.append(float(score))

    def clear(self):
        self._buf.clear()

    def snapshot(self):
        return list(self._buf)

    @property
    def ready(self):
        return len(self._buf) >= self.min_fill

    def __len__(self):
        return len(self._buf)


def threshold(history, lam):
    """mean + lam * population std of the history, or None during warm-up."""
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not history.ready:
        return None
    s = np.asarray(history.snapshot())
    return float(s.mean() + lam * s.std())


@dataclass
class DriftEvent:
    t: int
    mmd2: float
    threshold: float
    ref_bounds: tuple
    cur_bounds: tuple
    event_id: int = -1
    s_trend: float = None
    s_sea: float = None
    s_fluc: float = None
    action: str = None
    expert_id: str = None
    kind: str = None
    extra: dict = field(default_factory=dict)

    def log_record(self):
        rec = {k: v for k, v in asdict(self).items() if k not in ("extra", "ref_bounds", "cur_bounds")}
        rec["ref_bounds"] = list(self.ref_bounds)
        rec["cur_bounds"] = list(self.cur_bounds)
        rec.update(self.extra)
        return {k: v for k, v in rec.items() if v is not None}


@dataclass(frozen=True)
class Evaluation:
    t: int
    mmd2: float
    threshold: float
    drift: bool


class DriftDetector:
    """Stateful detector fed one current window at a time.

    After a drift the current window becomes the new reference. The score
    history carries over unless ``clear_on_drift`` is set; clearing re-enters
    the warm-up, during which a genuine shift right after a false alarm would
    go unflagged.
    """

    def __init__(self, window=96, history=50, min_fill=10, lam=3.0, clear_on_drift=False):
        if window < 2:
            raise ParameterError("detector window must hold >= 2 samples")
        if lam <= 0:
            raise ParameterError(f"lambda must be positive, got {lam}")
        self.window = window
        self.lam = lam
        self.clear_on_drift = clear_on_drift
        self.history = ScoreHistory(history, min_fill)
        self.reference = None
        self.ref_bounds = None
        self.sigma = None
        self.last = None

    def reset(self, reference, start=0):
        """Install a new reference window and clear the history."""
        self._set_reference(reference, start)
        self.history.clear()

    def _set_reference(self, reference, start):
        ref = _samples(reference)
        if ref.shape[0] < 2:
            raise DataError("reference window needs >= 2 samples")
        self.reference = ref.copy()
        self.ref_bounds = (int(start), int(start) + ref.shape[0])
        self.sigma = median_bandwidth(ref)

    def step(self, current, start):
        """Score one current window starting at absolute index ``start``.

        Returns a DriftEvent when the score beats the threshold computed from
        the history as it stood before this score.
        """
        if self.reference is None:
            raise DataError("detector has no reference window; call reset() first")
        cur = _samples(current)
        score = mmd_squared_biased(self.reference, cur, self.sigma)
        eps = threshold(self.history, self.lam)
        self.history.append(score)
        end = int(start) + cur.shape[0]
        drift = eps is not None and score > eps
        self.last = Evaluation(end - 1, score, eps, drift)
        if not drift:
            return None
        event = DriftEvent(end - 1, score, eps, self.ref_bounds, (int(start), end))
        if self.clear_on_drift:
            self.reset(cur, start)
        else:
            self._set_reference(cur, start)
        return event

    def scan(self, values, start=0):
        """Sweep a T x V stream: the first window is the reference, then
        every following non-overlapping window is scored.

        Yields (Evaluation, DriftEvent or None).
        """
        values = _samples(values)
        w = self.window
        self.reset(values[:w], start)
        pos = w
        while pos + w <= values.shape[0]:
            event = self.step(values[pos : pos + w], start + pos)
            yield self.last, event
            pos += w
