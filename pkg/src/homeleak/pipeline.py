"""The four cascaded attack stages and their evaluation protocols.

Stage-1 names the device behind every flow, Stage-2 marks windows with
activity, Stage-3 labels the resulting segments with a device action, and
Stage-4 decodes user activities from per-second snapshots of all devices.
"""
from __future__ import annotations

import json
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    DeviceIdentity,
    IntervalKind,
    LabeledInterval,
    MetricReport,
    Trace,
    accuracy_score,
    binary_report,
    classification_report,
    per_label_reports,
)
from .features import (
    SelectionMask,
    stage1_features,
    stage2_features,
    ts_feature_matrix,
    window_count,
    window_matrix,
)
from .learners import (
    ForestModel,
    ForestParams,
    HmmModel,
    KnnModel,
    ModelError,
    forest_fit,
    forest_predict,
    hmm_fit_supervised,
    hmm_viterbi,
    knn_fit,
    knn_predict,
)
from .traceio import Capture, SpltMatrix, is_coordinator, to_splt

HUB_IDENTITY = DeviceIdentity("ZigBee", "Hub")
IDLE = "Idle"
ACTIVITY_STATES = (IDLE, "Activity-1", "Activity-2", "Activity-3", "Activity-4", "Activity-5", "Activity-6")
DEFAULT_INTERVAL_S = 10.0
DEFAULT_GRID_S = 1.0


# --------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class StateSegment:
    flow_id: str
    start_s: float
    end_s: float
    packets: SpltMatrix
    label: Optional[str] = None

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"segment start must precede end: [{self.start_s}, {self.end_s})")
        ts = self.packets.timestamps
        if ts.size and (ts[0] < self.start_s or ts[-1] >= self.end_s):
            raise ValueError("segment packets must lie within [start, end)")

    def with_label(self, label: Optional[str]) -> "StateSegment":
        return StateSegment(self.flow_id, self.start_s, self.end_s, self.packets, label)

    def to_json(self) -> dict:
        return {"flow_id": self.flow_id, "start_s": self.start_s, "end_s": self.end_s, "label": self.label,
                "packets": len(self.packets)}


@dataclass(frozen=True)
class TransitionSeries:
    flow_id: str
    window_s: float
    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("transition bits must be 0 or 1")

    @property
    def bit_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def to_json(self) -> dict:
        return {"flow_id": self.flow_id, "window_s": self.window_s, "bits": self.bit_string}

    @classmethod
    def from_json(cls, d: Mapping) -> "TransitionSeries":
        return cls(d["flow_id"], float(d["window_s"]), tuple(int(c) for c in d["bits"]))


@dataclass(frozen=True)
class DeploymentMap:
    """Which flow drives which snapshot bit.

    ``sensors`` and ``devices`` list flow ids in bit order; ``controller`` is
    the flow whose activity sets M. The at-home bit L comes from ``away``
    intervals, since a passive capture cannot see the user's location.
    """
    sensors: tuple[str, ...]
    devices: tuple[str, ...]
    controller: Optional[str] = None
    away: tuple[tuple[float, float], ...] = ()

    @property
    def width(self) -> int:
        return len(self.sensors) + len(self.devices) + 2

    def flows(self) -> set[str]:
        out = set(self.sensors) | set(self.devices)
        if self.controller:
            out.add(self.controller)
        return out

    def to_json(self) -> dict:
        return {"sensors": list(self.sensors), "devices": list(self.devices), "controller": self.controller,
                "away": [list(a) for a in self.away]}

    @classmethod
    def from_json(cls, d: Mapping) -> "DeploymentMap":
        return cls(tuple(d["sensors"]), tuple(d["devices"]), d.get("controller"),
                   tuple((float(a), float(b)) for a, b in d.get("away", [])))


@dataclass(frozen=True)
class Snapshot:
    time_s: float
    S: tuple[int, ...]
    D: tuple[int, ...]
    M: int
    L: int

    def bits(self) -> tuple[int, ...]:
        return self.S + self.D + (self.M, self.L)

    def to_json(self) -> dict:
        return {"time_s": self.time_s, "S": "".join(map(str, self.S)), "D": "".join(map(str, self.D)),
                "M": self.M, "L": self.L}

    @classmethod
    def from_json(cls, d: Mapping) -> "Snapshot":
        return cls(float(d["time_s"]), tuple(int(c) for c in d["S"]), tuple(int(c) for c in d["D"]),
                   int(d["M"]), int(d["L"]))

    @classmethod
    def from_bits(cls, time_s: float, bits: Sequence[int], n_sensors: int, n_devices: int) -> "Snapshot":
        bits = tuple(int(b) for b in bits)
        if len(bits) != n_sensors + n_devices + 2:
            raise ValueError("bit vector width does not match the deployment")
        return cls(time_s, bits[:n_sensors], bits[n_sensors:n_sensors + n_devices], bits[-2], bits[-1])


def snapshot_matrix(snaps: Sequence[Snapshot]) -> np.ndarray:
    return np.array([s.bits() for s in snaps], dtype=np.int64).reshape(len(snaps), -1)


# --------------------------------------------------------------------------
# learner specification shared by the evaluation protocols

@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "rf"          # "rf" or "knn"
    k: int = 5
    forest: ForestParams = ForestParams()
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in ("rf", "knn"):
            raise ValueError(f"unknown learner kind {self.kind!r}")

    def fit(self, X, y, seed: int):
        if self.kind == "knn":
            return knn_fit(X, y, min(self.k, len(y)), seed)
        return forest_fit(X, y, self.forest, seed, jobs=self.jobs)

    def to_json(self) -> dict:
        return {"kind": self.kind, "k": self.k, "forest": self.forest.to_json()}


def predict(model, X) -> list:
    if isinstance(model, KnnModel):
        return knn_predict(model, X)
    if isinstance(model, ForestModel):
        return forest_predict(model, X)
    raise ModelError(f"cannot predict with {type(model).__name__}")


# --------------------------------------------------------------------------
# Stage-1: device identification

def _nonempty(rows):
    return [w for w in rows if w.packet_count > 0]


def stage1_training_set(traces: Iterable[Trace], interval_s: float = DEFAULT_INTERVAL_S):
    """Windows of every non-hub flow labeled with its identity string.

    Empty windows carry no signature, so they are left out.
    """
    X, y = [], []
    for t in traces:
        if not len(t) or is_coordinator(t):
            continue
        rows = _nonempty(stage1_features(to_splt(t), interval_s))
        X.append(window_matrix(rows))
        y += [str(t.meta.identity)] * len(rows)
    if not y:
        raise ValueError("no training windows")
    return np.vstack(X), y


@dataclass(frozen=True)
class IdentifierModel:
    """A Stage-1 kNN model together with the interval it was trained on."""
    model: KnnModel
    interval_s: float

    def to_json(self) -> dict:
        return {"interval_s": self.interval_s, "model": self.model.to_json()}

    @classmethod
    def from_json(cls, d: Mapping) -> "IdentifierModel":
        return cls(KnnModel.from_json(d["model"]), float(d["interval_s"]))


def stage1_train(traces: Iterable[Trace], interval_s: float = DEFAULT_INTERVAL_S, k: int = 5,
                 seed: int = 0) -> IdentifierModel:
    X, y = stage1_training_set(traces, interval_s)
    return IdentifierModel(knn_fit(X, y, k, seed), interval_s)


def _vote(preds: Sequence[str], dist: Sequence[float]) -> str:
    tally = Counter(preds)
    total: dict = {}
    for p, d in zip(preds, dist):
        total[p] = total.get(p, 0.0) + d
    return min(tally, key=lambda lab: (-tally[lab], total[lab], lab))


def stage1_identify(traces: Iterable[Trace], model, interval_s: float = DEFAULT_INTERVAL_S
                    ) -> "OrderedDict[str, DeviceIdentity]":
    """Majority vote of per-window predictions per flow.

    The ZigBee coordinator (address 0x0000) is labeled as the hub without
    consulting the classifier. Vote ties go to the label with the smaller
    total neighbour distance, then to label order.
    """
    from .learners import knn_neighbors

    if isinstance(model, IdentifierModel):
        if abs(model.interval_s - interval_s) > 1e-12:
            raise ModelError(f"identifier trained on {model.interval_s} s intervals, asked for {interval_s} s")
        model = model.model
    if not isinstance(model, KnnModel):
        raise ModelError("Stage-1 needs a trained kNN model")
    if model.n_features != 3:
        raise ModelError("Stage-1 model was not trained on window statistics")
    out: "OrderedDict[str, DeviceIdentity]" = OrderedDict()
    for t in traces:
        if not len(t):
            continue
        t = t.without_spoof_flags()
        if is_coordinator(t):
            out[t.flow_id] = HUB_IDENTITY
            continue
        rows = _nonempty(stage1_features(to_splt(t), interval_s)) or stage1_features(to_splt(t), interval_s)
        X = window_matrix(rows)
        idx, dist = knn_neighbors(model, X)
        preds = knn_predict(model, X)
        out[t.flow_id] = DeviceIdentity.parse(_vote(preds, dist.mean(axis=1)))
    return out


def stage1_report(identified: Mapping[str, DeviceIdentity], truth: Mapping[str, DeviceIdentity]) -> MetricReport:
    flows = [f for f in identified if f in truth]
    if not flows:
        raise ValueError("no flows with known identity")
    y_true = [str(truth[f]) for f in flows]
    y_pred = [str(identified[f]) for f in flows]
    return classification_report(y_true, y_pred)


# --------------------------------------------------------------------------
# Stage-2: activity detection

def stage2_training_set(traces: Iterable[Trace], window_s: float):
    X, y = [], []
    for t in traces:
        if not len(t):
            continue
        rows = stage2_features(to_splt(t), window_s, t.intervals(IntervalKind.DEVICE_ACTIVITY), t.end_time)
        X.append(window_matrix(rows))
        y += [w.label for w in rows]
    return np.vstack(X), y


@dataclass(frozen=True)
class DetectorModel:
    """A Stage-2 classifier together with the window it was trained on."""
    model: Union[KnnModel, ForestModel]
    window_s: float

    def to_json(self) -> dict:
        return {"window_s": self.window_s, "model": self.model.to_json()}

    @classmethod
    def from_json(cls, d: Mapping) -> "DetectorModel":
        from .learners import model_from_json
        return cls(model_from_json(d["model"]), float(d["window_s"]))


def stage2_train(traces: Iterable[Trace], window_s: float, spec: LearnerSpec = LearnerSpec(),
                 seed: int = 0) -> DetectorModel:
    X, y = stage2_training_set(traces, window_s)
    if len(set(y)) < 2 and spec.kind == "rf":
        raise ValueError("Stage-2 training needs both active and idle windows")
    return DetectorModel(spec.fit(X, y, seed), window_s)


def stage2_detect(t: Trace, detector: DetectorModel, window_s: Optional[float] = None,
                  end_s: Optional[float] = None) -> TransitionSeries:
    """One bit per window; windows without packets are 0 without asking the model."""
    if window_s is not None and abs(window_s - detector.window_s) > 1e-12:
        raise ModelError(f"detector trained for {detector.window_s} s windows, asked for {window_s} s")
    W = detector.window_s
    t = t.without_spoof_flags()
    if not len(t):
        n = window_count(end_s or 0.0, W)
        return TransitionSeries("", W, (0,) * n)
    rows = stage2_features(to_splt(t), W, end_s=end_s)
    bits = np.zeros(len(rows), dtype=np.int64)
    busy = [i for i, w in enumerate(rows) if w.packet_count > 0]
    if busy:
        preds = predict(detector.model, window_matrix([rows[i] for i in busy]))
        bits[busy] = [int(p) for p in preds]
    return TransitionSeries(t.flow_id or "", W, tuple(int(b) for b in bits))


def stage2_truth(t: Trace, window_s: float, end_s: Optional[float] = None) -> list[int]:
    rows = stage2_features(to_splt(t), window_s, t.intervals(IntervalKind.DEVICE_ACTIVITY), end_s)
    return [w.label for w in rows]


def stage2_report(series: Sequence[TransitionSeries], truth: Sequence[Sequence[int]]) -> MetricReport:
    """Binary detection metrics pooled over all windows of all flows."""
    y_true, y_pred = [], []
    for s, tr in zip(series, truth):
        if len(s.bits) != len(tr):
            raise ValueError("transition series and truth differ in length")
        y_true += list(tr)
        y_pred += list(s.bits)
    return binary_report(y_true, y_pred, positive=1)


def project_bits(ts: TransitionSeries, grid_s: float, n: int) -> list[int]:
    """Detector output resampled onto ``n`` windows of ``grid_s``.

    A grid window is 1 when any detector window overlapping it is 1. This
    puts detectors with different window sizes on a common footing.
    """
    out = []
    W = ts.window_s
    for j in range(n):
        lo, hi = j * grid_s, (j + 1) * grid_s
        first = int(np.floor(lo / W + 1e-9))
        last = int(np.ceil(hi / W - 1e-9)) - 1
        out.append(int(any(ts.bits[i] for i in range(first, min(last, len(ts.bits) - 1) + 1))))
    return out


# --------------------------------------------------------------------------
# segmentation

def bit_runs(bits: Sequence[int], merge_gap: int = 1) -> list[tuple[int, int]]:
    """Inclusive (first, last) window runs of 1s; runs separated by at most
    ``merge_gap`` zero windows are joined."""
    runs: list[list[int]] = []
    for i, b in enumerate(bits):
        if not b:
            continue
        if runs and i - runs[-1][1] - 1 <= merge_gap:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return [(a, b) for a, b in runs]


def segment_states(t: Trace, ts: TransitionSeries, merge_gap: int = 1) -> list[StateSegment]:
    """Candidate activity segments from runs of detected windows."""
    if not len(t):
        return []
    m = to_splt(t.without_spoof_flags())
    W = ts.window_s
    n = len(ts.bits)
    expected = window_count(m.timestamps[-1], W)
    if n < expected:
        raise ValueError(f"series has {n} windows but the trace needs {expected}")
    out = []
    for a, b in bit_runs(ts.bits, merge_gap):
        start, end = a * W, (b + 1) * W
        if b == n - 1:
            end = max(end, float(np.nextafter(m.timestamps[-1], np.inf)))
        pk = m.slice_time(start, end)
        if len(pk):
            out.append(StateSegment(ts.flow_id or m.flow_id, start, end, pk))
    return out


def truth_segments(t: Trace, label_fn: Optional[Callable[[LabeledInterval], str]] = None) -> list[StateSegment]:
    """One segment per annotated activity, labeled with its action."""
    if not len(t):
        return []
    m = to_splt(t)
    out = []
    for a in t.intervals(IntervalKind.DEVICE_ACTIVITY):
        end = float(np.nextafter(a.end, np.inf))  # keep a packet sitting exactly on the clipped end
        pk = m.slice_time(a.start, end)
        if len(pk):
            out.append(StateSegment(m.flow_id, a.start, end, pk, label_fn(a) if label_fn else a.label))
    return out


def label_segments(segments: Sequence[StateSegment], t: Trace,
                   label_fn: Optional[Callable[[LabeledInterval], str]] = None,
                   none_label: str = "none") -> list[StateSegment]:
    """Attach the action of the annotated activity overlapping each segment most."""
    acts = t.intervals(IntervalKind.DEVICE_ACTIVITY)
    out = []
    for s in segments:
        best, best_ov = None, 0.0
        for a in acts:
            ov = min(a.end, s.end_s) - max(a.start, s.start_s)
            if ov > best_ov:
                best, best_ov = a, ov
        lab = (label_fn(best) if label_fn else best.label) if best else none_label
        out.append(s.with_label(lab))
    return out


# --------------------------------------------------------------------------
# Stage-3: state classification

@dataclass(frozen=True)
class ClassifierModel:
    model: ForestModel
    mask: SelectionMask

    def to_json(self) -> dict:
        return {"model": self.model.to_json(), "mask": self.mask.to_json()}

    @classmethod
    def from_json(cls, d: Mapping) -> "ClassifierModel":
        from .learners import model_from_json
        return cls(model_from_json(d["model"]), SelectionMask.from_json(d["mask"]))


def stage3_train(segments: Sequence[StateSegment], seed: int = 0, spec: LearnerSpec = LearnerSpec(),
                 select: bool = True) -> ClassifierModel:
    from .features import select_features

    X = ts_feature_matrix(segments)
    y = [s.label for s in segments]
    if any(v is None for v in y):
        raise ValueError("every training segment needs a label")
    mask = select_features(X, y, seed, n_trees=spec.forest.n_trees, jobs=spec.jobs) if select \
        else SelectionMask.keep_all(X.shape[1])
    return ClassifierModel(forest_fit(mask.apply(X), y, spec.forest, seed, jobs=spec.jobs), mask)


def stage3_classify(segments: Sequence[StateSegment], clf: ClassifierModel) -> list[StateSegment]:
    if not segments:
        return []
    X = ts_feature_matrix(segments)
    if X.shape[1] != clf.mask.n_original:
        raise ModelError("feature width does not match the selection mask")
    Xm = clf.mask.apply(X)
    if Xm.shape[1] != clf.model.n_features:
        raise ModelError("selection mask does not match the classifier")
    preds = forest_predict(clf.model, Xm)
    return [s.with_label(str(p)) for s, p in zip(segments, preds)]


# --------------------------------------------------------------------------
# Stage-4: activity inference

def build_snapshots(segments: Iterable[StateSegment], grid_s: float, deployment: DeploymentMap,
                    duration_s: float, start_s: float = 0.0) -> list[Snapshot]:
    """Sample the home's state on a regular grid.

    A bit is 1 at time T when an active segment of its flow covers T
    (``start <= T < end``). Segments labeled ``none`` (classified as not an
    action) are ignored. L is 0 inside the deployment's away intervals.
    """
    if grid_s <= 0:
        raise ValueError("grid must be positive")
    pos_s = {f: i for i, f in enumerate(deployment.sensors)}
    pos_d = {f: i for i, f in enumerate(deployment.devices)}
    times = start_s + grid_s * np.arange(int(np.floor((duration_s - start_s) / grid_s + 1e-9)) + 1)
    S = np.zeros((times.size, len(pos_s)), dtype=np.int64)
    D = np.zeros((times.size, len(pos_d)), dtype=np.int64)
    M = np.zeros(times.size, dtype=np.int64)
    for seg in segments:
        if seg.label == "none":
            continue
        cover = (times >= seg.start_s) & (times < seg.end_s)
        if seg.flow_id in pos_s:
            S[cover, pos_s[seg.flow_id]] = 1
        elif seg.flow_id in pos_d:
            D[cover, pos_d[seg.flow_id]] = 1
        elif seg.flow_id == deployment.controller:
            M[cover] = 1
        else:
            raise ValueError(f"flow {seg.flow_id!r} is not in the deployment map")
    L = np.ones(times.size, dtype=np.int64)
    for a, b in deployment.away:
        L[(times >= a) & (times < b)] = 0
    return [Snapshot(float(t), tuple(S[i].tolist()), tuple(D[i].tolist()), int(M[i]), int(L[i]))
            for i, t in enumerate(times)]


def activity_labels_at(times: Sequence[float], activities: Iterable[LabeledInterval]) -> list[str]:
    acts = [a for a in activities if a.kind is IntervalKind.USER_ACTIVITY]
    out = []
    for t in times:
        lab = IDLE
        for a in acts:
            if a.contains(t):
                lab = a.label
                break
        out.append(lab)
    return out


def stage4_train(sequences: Sequence[tuple[Sequence[Snapshot], Sequence[str]]], alpha: float = 0.01,
                 states: Sequence[str] = ACTIVITY_STATES) -> HmmModel:
    return hmm_fit_supervised([(snapshot_matrix(s), lab) for s, lab in sequences], states, alpha)


@dataclass(frozen=True)
class InferenceResult:
    labels: list[str]
    accuracy: Optional[float] = None
    per_activity: Mapping[str, MetricReport] = field(default_factory=dict)
    macro: Optional[MetricReport] = None


def stage4_infer(snapshots: Sequence[Snapshot], model: HmmModel,
                 truth: Optional[Sequence[str]] = None) -> InferenceResult:
    """Viterbi decode; with ground truth, one-vs-rest metrics per activity."""
    if not snapshots:
        raise ValueError("no snapshots to decode")
    X = snapshot_matrix(snapshots)
    if X.shape[1] != model.n_bits:
        raise ModelError(f"snapshot width {X.shape[1]} does not match HMM width {model.n_bits}")
    labels = hmm_viterbi(model, X)
    if truth is None:
        return InferenceResult(labels)
    if len(truth) != len(labels):
        raise ValueError("truth and snapshots differ in length")
    present = [s for s in model.states if s in set(truth)]
    reports = per_label_reports(list(truth), labels, present)
    macro = classification_report(list(truth), labels, [s for s in present if s != IDLE] or present)
    return InferenceResult(labels, accuracy_score(list(truth), labels), reports, macro)


def decoded_spans(times: Sequence[float], labels: Sequence[str], grid_s: float) -> list[LabeledInterval]:
    """Collapse a decoded label sequence into activity spans (Idle omitted)."""
    out = []
    i = 0
    while i < len(labels):
        j = i
        while j + 1 < len(labels) and labels[j + 1] == labels[i]:
            j += 1
        if labels[i] != IDLE:
            out.append(LabeledInterval(float(times[i]), float(times[j]) + grid_s,
                                       IntervalKind.USER_ACTIVITY, labels[i]))
        i = j + 1
    return out


# --------------------------------------------------------------------------
# evaluation protocols

class StratificationError(ValueError):
    pass


def stratified_folds(y: Sequence, folds: int, seed: int) -> np.ndarray:
    """Fold index per sample: each class is shuffled and dealt round-robin."""
    y = list(y)
    if folds < 2:
        raise ValueError("need at least two folds")
    if len(y) < folds:
        raise ValueError(f"{len(y)} samples cannot fill {folds} folds")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF01D]))
    out = np.empty(len(y), dtype=np.int64)
    offset = 0
    for lab in sorted(set(y), key=str):
        idx = np.array([i for i, v in enumerate(y) if v == lab])
        idx = idx[rng.permutation(idx.size)]
        out[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return out


def _largest_remainder(sizes: Sequence[int], total: int) -> list[int]:
    n = sum(sizes)
    quotas = [s * total / n for s in sizes]
    base = [int(np.floor(q)) for q in quotas]
    rest = total - sum(base)
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def stratified_holdout(y: Sequence, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Train and test indices; the test share of each class follows its frequency.

    The test size is ``round(test_fraction * n)``, spread over classes by
    largest remainder; every class keeps at least one training sample.
    """
    y = list(y)
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    labels = sorted(set(y), key=str)
    groups = [np.array([i for i, v in enumerate(y) if v == lab]) for lab in labels]
    if any(g.size < 2 for g in groups):
        raise StratificationError("every class needs at least two samples for a stratified split")
    n_test = int(round(test_fraction * len(y)))
    alloc = _largest_remainder([g.size for g in groups], n_test)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x40D]))
    train, test = [], []
    for g, k in zip(groups, alloc):
        k = min(k, g.size - 1)
        g = g[rng.permutation(g.size)]
        test += g[:k].tolist()
        train += g[k:].tolist()
    return np.array(sorted(train)), np.array(sorted(test))


def _eval_report(y_true, y_pred) -> MetricReport:
    labels = sorted(set(y_true), key=str)
    if set(labels) <= {0, 1} and len(labels) == 2:
        return binary_report(y_true, y_pred, positive=1)
    return classification_report(y_true, y_pred, labels)


def cross_validate(X, y: Sequence, folds: int = 5, spec: LearnerSpec = LearnerSpec(), seed: int = 0,
                   max_retries: int = 10) -> MetricReport:
    """Stratified k-fold; the fold reports are macro averaged.

    Binary 0/1 tasks report the positive class; multi-class tasks the macro
    average over classes.
    """
    from .core import macro_average

    X = np.asarray(X, dtype=float)
    y = list(y)
    if len(set(y)) < 2:
        raise StratificationError("cross-validation needs at least two classes")
    for attempt in range(max_retries):
        assign = stratified_folds(y, folds, seed + attempt)
        ok = all(len({y[i] for i in np.flatnonzero(assign != f)}) >= 2 for f in range(folds))
        if ok:
            break
    else:
        raise StratificationError("could not draw folds with two classes in every training split")
    reports = []
    for f in range(folds):
        tr, te = np.flatnonzero(assign != f), np.flatnonzero(assign == f)
        model = spec.fit(X[tr], [y[i] for i in tr], seed)
        reports.append(_eval_report([y[i] for i in te], predict(model, X[te])))
    return macro_average(reports)


def holdout_eval(X, y: Sequence, test_fraction: float = 0.25, spec: LearnerSpec = LearnerSpec(),
                 seed: int = 0) -> MetricReport:
    X = np.asarray(X, dtype=float)
    y = list(y)
    tr, te = stratified_holdout(y, test_fraction, seed)
    model = spec.fit(X[tr], [y[i] for i in tr], seed)
    return _eval_report([y[i] for i in te], predict(model, X[te]))


def cascade_bound(stage_accuracies: Sequence[float]) -> float:
    """Product of per-stage success rates, bounding end-to-end inference."""
    out = 1.0
    for a in stage_accuracies:
        out *= a
    return out


# --------------------------------------------------------------------------
# JSONL artifacts

def write_jsonl(path: Union[str, Path], rows: Iterable[Mapping]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
    return p


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def segment_record(s: StateSegment) -> dict:
    return {"flow_id": s.flow_id, "start_s": s.start_s, "end_s": s.end_s, "label": s.label}


def segments_from_records(records: Iterable[Mapping], capture: Capture) -> list[StateSegment]:
    """Rebuild segments by slicing the capture's flows again."""
    splts = {f: to_splt(t) for f, t in capture.traces.items() if len(t)}
    out = []
    for r in records:
        m = splts[r["flow_id"]]
        out.append(StateSegment(r["flow_id"], float(r["start_s"]), float(r["end_s"]),
                                m.slice_time(float(r["start_s"]), float(r["end_s"])), r.get("label")))
    return out


def activity_record(a: LabeledInterval) -> dict:
    return {"start_s": a.start, "end_s": a.end, "label": a.label}
