"""Feature extraction for every attack stage.

Stage-1 and Stage-2 work on fixed windows of a flow. Each window is reduced
to mean packet length, mean inter-arrival time and a dispersion term (std
for Stage-1, median absolute deviation for Stage-2).

Stage-3 maps a segment to a fixed bank of 44 time-series features, computed
once over the packet-length series and once over the inter-arrival series.
Tree importances then prune the 88 raw features.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import IntervalKind, LabeledInterval
from .traceio import SpltMatrix

Label = Union[int, str, None]


@dataclass(frozen=True)
class WindowFeatures:
    window_start_s: float
    window_len_s: float
    mean_len: float
    mean_iat: float
    dispersion: float
    packet_count: int
    label: Label = None

    def vector(self) -> tuple[float, float, float]:
        return (self.mean_len, self.mean_iat, self.dispersion)


WINDOW_FEATURE_NAMES = ("mean_len", "mean_iat", "dispersion")


def window_count(end_s: float, window_s: float) -> int:
    """Number of windows covering ``[0, ceil(end/W)*W)``, at least one."""
    return max(1, math.ceil(end_s / window_s))


def _window_slices(ts: np.ndarray, window_s: float, end_s: Optional[float] = None):
    end = float(ts[-1]) if end_s is None and ts.size else (end_s or 0.0)
    n = window_count(end, window_s)
    edges = np.arange(n + 1) * window_s
    idx = np.searchsorted(ts, edges, side="left")
    # the last window is closed on the right so a packet exactly at ceil(end/W)*W is kept
    idx[-1] = ts.size
    return n, idx


def _mad(x: np.ndarray) -> float:
    return float(np.median(np.abs(x - np.median(x))))


def _windows(m: SpltMatrix, window_s: float, dispersion, end_s: Optional[float]) -> list[WindowFeatures]:
    if window_s <= 0:
        raise ValueError("window length must be positive")
    ts, lens = m.timestamps, m.lengths
    n, idx = _window_slices(ts, window_s, end_s)
    out = []
    for i in range(n):
        lo, hi = idx[i], idx[i + 1]
        start = i * window_s
        if hi <= lo:
            out.append(WindowFeatures(start, window_s, 0.0, window_s, 0.0, 0))
            continue
        w_len, w_ts = lens[lo:hi], ts[lo:hi]
        iat = float(np.mean(np.diff(w_ts))) if hi - lo >= 2 else window_s
        out.append(WindowFeatures(start, window_s, float(np.mean(w_len)), iat, dispersion(w_len), hi - lo))
    return out


def stage1_features(m: SpltMatrix, interval_s: float, label: Label = None,
                    end_s: Optional[float] = None) -> list[WindowFeatures]:
    """Fixed-interval statistics; dispersion is the population std of lengths."""
    rows = _windows(m, interval_s, lambda x: float(np.std(x)), end_s)
    if label is None:
        return rows
    return [WindowFeatures(**{**w.__dict__, "label": label}) for w in rows]


def window_labels(n: int, window_s: float, annotations: Iterable[LabeledInterval]) -> np.ndarray:
    """1 for every window that overlaps any DeviceActivity interval."""
    labels = np.zeros(n, dtype=np.int64)
    for a in annotations:
        if a.kind is not IntervalKind.DEVICE_ACTIVITY:
            continue
        first = max(0, int(math.floor(a.start / window_s)))
        last = min(n - 1, int(math.ceil(a.end / window_s)) - 1)
        labels[first:last + 1] = 1
    return labels


def stage2_features(m: SpltMatrix, window_s: float, annotations: Optional[Iterable[LabeledInterval]] = None,
                    end_s: Optional[float] = None) -> list[WindowFeatures]:
    """Detection windows; dispersion is the median absolute deviation of lengths.

    With ``annotations`` each window is labeled 1 if it overlaps any activity
    at all, else 0.
    """
    rows = _windows(m, window_s, _mad, end_s)
    if annotations is None:
        return rows
    labels = window_labels(len(rows), window_s, annotations)
    return [WindowFeatures(**{**w.__dict__, "label": int(y)}) for w, y in zip(rows, labels)]


def window_matrix(rows: Sequence[WindowFeatures]) -> np.ndarray:
    return np.array([w.vector() for w in rows], dtype=float).reshape(-1, 3)


def recommend_window(activity_duration_s: float) -> float:
    """Detection window sized to a quarter of the activity duration."""
    if not activity_duration_s > 0:
        raise ValueError("activity duration must be positive")
    return activity_duration_s / 4


# --------------------------------------------------------------------------
# time-series feature bank

CWT_WIDTHS = (2, 5, 10, 20)
CWT_COEFFS = 5
FFT_COEFFS = 10
POLY_DEGREE = 3
ENTROPY_BINS = 10

_SCALAR_NAMES = ("abs_energy", "length", "mean", "median", "skewness", "entropy",
                 "std", "variance", "minimum", "maximum")
SERIES_FEATURE_NAMES: tuple[str, ...] = (
    _SCALAR_NAMES
    + tuple(f"cwt_w{w}_c{i}" for w in CWT_WIDTHS for i in range(CWT_COEFFS))
    + tuple(f"fft_abs_{k}" for k in range(FFT_COEFFS))
    + tuple(f"poly_c{i}" for i in range(POLY_DEGREE + 1))
)
SERIES_FEATURES = len(SERIES_FEATURE_NAMES)
TS_FEATURE_NAMES: tuple[str, ...] = (tuple(f"len__{n}" for n in SERIES_FEATURE_NAMES)
                                     + tuple(f"iat__{n}" for n in SERIES_FEATURE_NAMES))


def ricker(points: int, a: float) -> np.ndarray:
    """Mexican-hat wavelet sampled at ``points`` positions centred on zero."""
    amp = 2 / (np.sqrt(3 * a) * np.pi ** 0.25)
    t = np.arange(points) - (points - 1.0) / 2
    tsq = t ** 2
    return amp * (1 - tsq / a ** 2) * np.exp(-tsq / (2 * a ** 2))


def cwt_ricker(x: np.ndarray, widths: Sequence[int] = CWT_WIDTHS) -> np.ndarray:
    """Continuous wavelet transform, one row per width, same length as ``x``.

    The wavelet for width ``a`` spans ``min(10a, len(x))`` samples and is
    applied by 'same'-mode convolution.
    """
    out = np.empty((len(widths), x.size))
    for i, w in enumerate(widths):
        wavelet = ricker(min(10 * w, x.size), w)[::-1]
        out[i] = np.convolve(x, wavelet, mode="same")
    return out


def skewness(x: np.ndarray) -> float:
    """Adjusted Fisher-Pearson skewness; 0 when n < 3 or the series is constant."""
    n = x.size
    if n < 3:
        return 0.0
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if m2 <= 0:
        return 0.0
    m3 = np.mean(d ** 3)
    return float(np.sqrt(n * (n - 1)) / (n - 2) * m3 / m2 ** 1.5)


def histogram_entropy(x: np.ndarray, bins: int = ENTROPY_BINS) -> float:
    counts, _ = np.histogram(x, bins=bins)
    p = counts[counts > 0] / x.size
    return float(-np.sum(p * np.log(p)))


def poly_coefficients(x: np.ndarray, degree: int = POLY_DEGREE) -> np.ndarray:
    """Least-squares polynomial over the sample index, lowest order first.

    Series too short for the full degree get the highest degree they
    support; the missing higher coefficients are 0.
    """
    out = np.zeros(degree + 1)
    deg = min(degree, x.size - 1)
    out[:deg + 1] = np.polynomial.polynomial.polyfit(np.arange(x.size, dtype=float), x, deg)
    return out


def series_features(x: Sequence[float]) -> np.ndarray:
    """The 44-feature bank over one series; an empty series maps to all zeros."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(SERIES_FEATURES)
    if x.size == 0:
        return out
    out[:10] = (
        float(np.dot(x, x)), float(x.size), float(x.mean()), float(np.median(x)),
        skewness(x), histogram_entropy(x), float(x.std()), float(x.var()),
        float(x.min()), float(x.max()),
    )
    pos = 10
    padded = np.pad(x, (0, max(0, CWT_COEFFS - x.size)))
    out[pos:pos + len(CWT_WIDTHS) * CWT_COEFFS] = cwt_ricker(padded)[:, :CWT_COEFFS].ravel()
    pos += len(CWT_WIDTHS) * CWT_COEFFS
    spectrum = np.abs(np.fft.fft(x))[:FFT_COEFFS]
    out[pos:pos + spectrum.size] = spectrum
    pos += FFT_COEFFS
    out[pos:] = poly_coefficients(x)
    return out


@dataclass(frozen=True)
class TsFeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(TS_FEATURE_NAMES),):
            raise ValueError(f"expected {len(TS_FEATURE_NAMES)} features, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def names(self) -> tuple[str, ...]:
        return TS_FEATURE_NAMES

    def as_dict(self) -> dict[str, float]:
        return dict(zip(TS_FEATURE_NAMES, self.values.tolist()))


def ts_features(seg) -> TsFeatureVector:
    """Feature bank over a segment's length series and inter-arrival series.

    Accepts a StateSegment (anything with a ``packets`` SpltMatrix) or an
    SpltMatrix directly.
    """
    m: SpltMatrix = getattr(seg, "packets", seg)
    if len(m) < 1:
        raise ValueError("segment has no packets")
    return TsFeatureVector(np.concatenate([series_features(m.lengths),
                                           series_features(np.diff(m.timestamps))]))


def ts_feature_matrix(segments: Iterable) -> np.ndarray:
    rows = [ts_features(s).values for s in segments]
    return np.vstack(rows) if rows else np.zeros((0, len(TS_FEATURE_NAMES)))


# --------------------------------------------------------------------------
# selection

@dataclass(frozen=True)
class SelectionMask:
    kept: tuple[int, ...]
    importances: tuple[float, ...]
    threshold: float

    def __post_init__(self):
        if not self.kept:
            raise ValueError("selection mask must keep at least one feature")
        if any(not 0 <= i < len(self.importances) for i in self.kept):
            raise ValueError("kept index outside the original feature range")

    @property
    def n_original(self) -> int:
        return len(self.importances)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_original:
            raise ValueError(f"mask expects {self.n_original} columns, got shape {X.shape}")
        return X[:, list(self.kept)]

    def to_json(self) -> dict:
        return {"kept": list(self.kept), "importances": list(self.importances), "threshold": self.threshold}

    @classmethod
    def from_json(cls, d: dict) -> "SelectionMask":
        return cls(tuple(int(i) for i in d["kept"]), tuple(float(v) for v in d["importances"]),
                   float(d["threshold"]))

    @classmethod
    def keep_all(cls, n: int) -> "SelectionMask":
        return cls(tuple(range(n)), tuple([1.0 / n] * n), 0.0)


def mask_from_importances(importances: Sequence[float]) -> SelectionMask:
    """Keep features whose importance strictly exceeds the mean; keep all if none does."""
    imp = np.asarray(importances, dtype=float)
    threshold = float(imp.mean())
    kept = tuple(int(i) for i in np.flatnonzero(imp > threshold))
    return SelectionMask(kept or tuple(range(imp.size)), tuple(imp.tolist()), threshold)


def select_features(X: np.ndarray, y: Sequence, seed: int, n_trees: int = 100, jobs: int = 1) -> SelectionMask:
    from .learners import ForestMode, ForestParams, forest_fit, forest_importances

    X = np.asarray(X, dtype=float)
    if len(set(y)) < 2:
        raise ValueError("feature selection needs at least two distinct labels")
    if X.shape[0] < 10:
        raise ValueError("feature selection needs at least 10 samples")
    model = forest_fit(X, y, ForestParams(n_trees=n_trees, mode=ForestMode.EXTRA), seed, jobs=jobs)
    return mask_from_importances(forest_importances(model))


def feature_csv(X: np.ndarray, y: Optional[Sequence] = None,
                names: Optional[Sequence[str]] = None) -> str:
    """Header-bearing CSV; the label, when given, is the last column."""
    X = np.asarray(X, dtype=float)
    names = list(names) if names is not None else [f"f{i}" for i in range(X.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names + (["label"] if y is not None else []))
    for i, row in enumerate(X):
        w.writerow([repr(float(v)) for v in row] + ([y[i]] if y is not None else []))
    return buf.getvalue()


def read_feature_csv(text: str) -> tuple[np.ndarray, Optional[list[str]], list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header and header[-1] == "label":
        X = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), len(header) - 1)
        return X, [r[-1] for r in body], header[:-1]
    return np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header)), None, header
