"""Shared domain types and the evaluation metrics used by every stage."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence


class Direction(str, Enum):
    INCOMING = "I"
    OUTGOING = "O"


class Protocol(str, Enum):
    WIFI = "wifi"
    ZIGBEE = "zigbee"
    BLE = "ble"


class IntervalKind(str, Enum):
    DEVICE_ACTIVITY = "DeviceActivity"
    DEVICE_STATE = "DeviceState"
    USER_ACTIVITY = "UserActivity"


# ZigBee network coordinators always take this network address.
ZIGBEE_COORDINATOR = "0x0000"
BLE_ADVERTISING_CHANNELS = (37, 38, 39)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    timestamp: float
    direction: Direction
    length: int
    flow_id: str
    protocol: Protocol
    spoofed: bool = False

    def __post_init__(self):
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError(f"timestamp must be finite and >= 0, got {self.timestamp!r}")
        if self.length < 1:
            raise ValueError(f"packet length must be >= 1, got {self.length!r}")


@dataclass(frozen=True, slots=True)
class LabeledInterval:
    start: float
    end: float
    kind: IntervalKind
    label: str

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"interval start must precede end: [{self.start}, {self.end})")
        if not self.label:
            raise ValueError("interval label must be non-empty")

    def overlaps(self, lo: float, hi: float) -> bool:
        return self.start < hi and lo < self.end

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True, slots=True)
class DeviceIdentity:
    brand: str
    device_type: str

    def __str__(self) -> str:
        return f"{self.brand}/{self.device_type}"

    @classmethod
    def parse(cls, text: str) -> "DeviceIdentity":
        brand, _, device_type = text.partition("/")
        if not brand or not device_type:
            raise ValueError(f"identity must look like 'brand/type', got {text!r}")
        return cls(brand, device_type)


@dataclass(frozen=True)
class DeviceMeta:
    brand: str = "unknown"
    device_type: str = "unknown"
    protocol: Protocol = Protocol.WIFI

    @property
    def identity(self) -> DeviceIdentity:
        return DeviceIdentity(self.brand, self.device_type)


@dataclass(frozen=True)
class Trace:
    """Time-ordered packets of one flow plus its ground-truth annotations."""

    records: tuple[PacketRecord, ...]
    meta: DeviceMeta = field(default_factory=DeviceMeta)
    annotations: tuple[LabeledInterval, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        ts = [r.timestamp for r in self.records]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("trace records must be sorted by timestamp")
        last = ts[-1] if ts else 0.0
        for a in self.annotations:
            if a.start < 0 or a.end > last + 1e-9:
                raise ValueError(f"annotation {a} outside [0, {last}]")

    @classmethod
    def from_unsorted(cls, records: Iterable[PacketRecord], meta: DeviceMeta = DeviceMeta(),
                      annotations: Iterable[LabeledInterval] = ()) -> "Trace":
        # sorted() is stable, so timestamp ties keep insertion order
        return cls(tuple(sorted(records, key=lambda r: r.timestamp)), meta, tuple(annotations))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def flow_id(self) -> Optional[str]:
        return self.records[0].flow_id if self.records else None

    @property
    def end_time(self) -> float:
        return self.records[-1].timestamp if self.records else 0.0

    def intervals(self, kind: IntervalKind) -> list[LabeledInterval]:
        return [a for a in self.annotations if a.kind is kind]

    def without_spoof_flags(self) -> "Trace":
        """Attack-side view: the spoof flag is cleared on every record."""
        if not any(r.spoofed for r in self.records):
            return self
        return replace(self, records=tuple(replace(r, spoofed=False) if r.spoofed else r
                                           for r in self.records))


# --------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


METRIC_FIELDS = ("tpr", "fnr", "tnr", "fpr", "precision", "accuracy", "f1")


@dataclass(frozen=True)
class MetricReport:
    """The seven rate metrics; a field is None when its denominator was zero."""

    tpr: Optional[float]
    fnr: Optional[float]
    tnr: Optional[float]
    fpr: Optional[float]
    precision: Optional[float]
    accuracy: Optional[float]
    f1: Optional[float]
    support: int = 0

    @property
    def recall(self) -> Optional[float]:
        return self.tpr

    def defined(self, name: str) -> bool:
        return getattr(self, name) is not None

    def to_dict(self) -> dict:
        out = {}
        for name in METRIC_FIELDS:
            value = getattr(self, name)
            out[name] = value
            out[f"{name}_defined"] = value is not None
        out["support"] = self.support
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: d.get(k) for k in METRIC_FIELDS}, support=int(d.get("support", 0)))

    def to_text(self) -> str:
        lines = []
        for name in METRIC_FIELDS:
            value = getattr(self, name)
            lines.append(f"{name}={'undefined' if value is None else repr(value)}")
        lines.append(f"support={self.support}")
        return "\n".join(lines) + "\n"


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


def compute_metrics(c: ConfusionCounts) -> MetricReport:
    """Rates from a binary confusion matrix.

    F1 is the harmonic mean of precision and recall, evaluated as
    2TP/(2TP+FP+FN); the two agree whenever both rates are defined, and the
    count form stays defined (as 0) when the detector never fires. Any
    metric whose denominator is zero comes back as None instead of a silent 0.
    """
    if c.total < 1:
        raise ValueError("at least one confusion count must be positive")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    return MetricReport(
        tpr=recall,
        fnr=_ratio(c.fn, c.tp + c.fn),
        tnr=_ratio(c.tn, c.tn + c.fp),
        fpr=_ratio(c.fp, c.tn + c.fp),
        precision=precision,
        accuracy=_ratio(c.tp + c.tn, c.total),
        f1=f1,
        support=c.tp + c.fn,
    )


def macro_average(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted mean per field; undefined entries are left out of that field's mean."""
    if not reports:
        raise ValueError("macro_average needs at least one report")
    values = {}
    for name in METRIC_FIELDS:
        defined = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        values[name] = math.fsum(defined) / len(defined) if defined else None
    return MetricReport(**values, support=sum(r.support for r in reports))


def one_vs_rest_counts(y_true: Sequence, y_pred: Sequence, label) -> ConfusionCounts:
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    tp = fp = tn = fn = 0
    for t, p in zip(y_true, y_pred):
        if t == label:
            if p == label:
                tp += 1
            else:
                fn += 1
        elif p == label:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def binary_report(y_true: Sequence, y_pred: Sequence, positive=1) -> MetricReport:
    return compute_metrics(one_vs_rest_counts(y_true, y_pred, positive))


def classification_report(y_true: Sequence, y_pred: Sequence,
                          labels: Optional[Sequence] = None) -> MetricReport:
    """Per-label one-vs-rest metrics, macro averaged.

    ``labels`` defaults to every label present in ``y_true``; predictions
    outside that set still count as false positives for the true label's row.
    """
    if labels is None:
        labels = sorted(set(y_true), key=str)
    return macro_average([compute_metrics(one_vs_rest_counts(y_true, y_pred, lab)) for lab in labels])


def per_label_reports(y_true: Sequence, y_pred: Sequence,
                      labels: Optional[Sequence] = None) -> dict:
    if labels is None:
        labels = sorted(set(y_true), key=str)
    return {lab: compute_metrics(one_vs_rest_counts(y_true, y_pred, lab)) for lab in labels}


def accuracy_score(y_true: Sequence, y_pred: Sequence) -> float:
    if len(y_true) != len(y_pred) or not len(y_true):
        raise ValueError("need equal-length, non-empty label sequences")
    return sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)
