"""Reading and writing traces, SPLT conversion and flow splitting.

Packet line format (one packet per line, ``#`` starts a comment)::

    <timestamp_s> <I|O> <length_bytes> <flow_id> <wifi|zigbee|ble> [spoofed]

Annotation line format::

    <start_s> <end_s> <kind> <label> [flow_id]

Annotations without a flow id belong to the capture as a whole (user
activities); the rest attach to the trace of that flow. Both formats have a
JSONL twin that uses the same field names.
"""
from __future__ import annotations

import io
import json
import logging
import os
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .core import (
    DeviceMeta,
    Direction,
    IntervalKind,
    LabeledInterval,
    PacketRecord,
    Protocol,
    Trace,
    ZIGBEE_COORDINATOR,
)

log = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

TRACE_FILE = "capture.trace"
ANNOTATION_FILE = "annotations.ann"
DEVICES_FILE = "devices.json"


class TraceFormatError(ValueError):
    """A trace or annotation line that does not follow the format."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if line_no is not None else message)


class SplitBy(str, Enum):
    FLOW_ID = "flow_id"
    PROTOCOL = "protocol"


@dataclass(frozen=True)
class SpltMatrix:
    """Per-packet ``[timestamp, direction, length]`` rows; direction 1 = incoming."""

    rows: np.ndarray
    flow_id: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        return self.rows[:, 0]

    @property
    def directions(self) -> np.ndarray:
        return self.rows[:, 1]

    @property
    def lengths(self) -> np.ndarray:
        return self.rows[:, 2]

    def slice_time(self, start: float, end: float) -> "SpltMatrix":
        ts = self.timestamps
        lo, hi = np.searchsorted(ts, start, "left"), np.searchsorted(ts, end, "left")
        return SpltMatrix(self.rows[lo:hi], self.flow_id)


@dataclass
class Capture:
    traces: "OrderedDict[str, Trace]"
    annotations: list[LabeledInterval] = field(default_factory=list)
    unsorted_lines: int = 0

    @property
    def duration(self) -> float:
        return max((t.end_time for t in self.traces.values()), default=0.0)

    @property
    def total_packets(self) -> int:
        return sum(len(t) for t in self.traces.values())

    @property
    def total_bytes(self) -> int:
        return sum(r.length for t in self.traces.values() for r in t.records)

    @property
    def meta(self) -> dict:
        return {"duration_s": self.duration, "total_packets": self.total_packets,
                "total_bytes": self.total_bytes, "unsorted_lines": self.unsorted_lines}

    def records(self) -> list[PacketRecord]:
        merged = [r for t in self.traces.values() for r in t.records]
        merged.sort(key=lambda r: r.timestamp)
        return merged


# --------------------------------------------------------------------------
# line-level codecs

def format_record(r: PacketRecord) -> str:
    line = f"{r.timestamp!r} {r.direction.value} {r.length} {r.flow_id} {r.protocol.value}"
    return line + " spoofed" if r.spoofed else line


def parse_record(line: str, line_no: Optional[int] = None, origin: float = 0.0) -> PacketRecord:
    parts = line.split()
    if len(parts) not in (5, 6):
        raise TraceFormatError(f"expected 5 or 6 fields, got {len(parts)}", line_no)
    ts_text, dir_text, len_text, flow_id, proto_text = parts[:5]
    try:
        ts = float(ts_text) - origin
    except ValueError:
        raise TraceFormatError(f"bad timestamp {ts_text!r}", line_no) from None
    if not np.isfinite(ts) or ts < 0:
        raise TraceFormatError(f"timestamp {ts_text!r} is negative or not finite", line_no)
    try:
        direction = Direction(dir_text)
    except ValueError:
        raise TraceFormatError(f"bad direction {dir_text!r} (expected I or O)", line_no) from None
    try:
        length = int(len_text)
    except ValueError:
        raise TraceFormatError(f"bad length {len_text!r}", line_no) from None
    if length < 1:
        raise TraceFormatError(f"length must be >= 1, got {length}", line_no)
    try:
        protocol = Protocol(proto_text.lower())
    except ValueError:
        raise TraceFormatError(f"unknown protocol {proto_text!r}", line_no) from None
    spoofed = False
    if len(parts) == 6:
        if parts[5] != "spoofed":
            raise TraceFormatError(f"unexpected trailing field {parts[5]!r}", line_no)
        spoofed = True
    return PacketRecord(ts, direction, length, flow_id, protocol, spoofed)


def record_to_json(r: PacketRecord) -> dict:
    return {"timestamp": r.timestamp, "direction": r.direction.value, "length": r.length,
            "flow_id": r.flow_id, "protocol": r.protocol.value, "spoofed": r.spoofed}


def record_from_json(d: dict, line_no: Optional[int] = None, origin: float = 0.0) -> PacketRecord:
    try:
        return parse_record(
            f"{float(d['timestamp'])!r} {d['direction']} {int(d['length'])} {d['flow_id']} "
            f"{d['protocol']}" + (" spoofed" if d.get("spoofed") else ""), line_no, origin)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TraceFormatError):
            raise
        raise TraceFormatError(f"bad packet object: {exc}", line_no) from None


def format_annotation(a: LabeledInterval, flow_id: Optional[str] = None) -> str:
    if any(ch.isspace() for ch in a.label):
        raise ValueError(f"labels may not contain whitespace in the line format: {a.label!r}")
    line = f"{a.start!r} {a.end!r} {a.kind.value} {a.label}"
    return f"{line} {flow_id}" if flow_id else line


def parse_annotation(line: str, line_no: Optional[int] = None) -> tuple[LabeledInterval, Optional[str]]:
    parts = line.split()
    if len(parts) not in (4, 5):
        raise TraceFormatError(f"expected 4 or 5 annotation fields, got {len(parts)}", line_no)
    try:
        start, end = float(parts[0]), float(parts[1])
        kind = IntervalKind(parts[2])
        interval = LabeledInterval(start, end, kind, parts[3])
    except ValueError as exc:
        raise TraceFormatError(str(exc), line_no) from None
    return interval, (parts[4] if len(parts) == 5 else None)


def annotation_to_json(a: LabeledInterval, flow_id: Optional[str] = None) -> dict:
    d = {"start": a.start, "end": a.end, "kind": a.kind.value, "label": a.label}
    if flow_id:
        d["flow_id"] = flow_id
    return d


def annotation_from_json(d: dict, line_no: Optional[int] = None) -> tuple[LabeledInterval, Optional[str]]:
    try:
        interval = LabeledInterval(float(d["start"]), float(d["end"]), IntervalKind(d["kind"]), str(d["label"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceFormatError(f"bad annotation object: {exc}", line_no) from None
    return interval, d.get("flow_id")


# --------------------------------------------------------------------------
# whole files

def _open_text(source) -> io.TextIOBase:
    if hasattr(source, "read"):
        return source
    return open(source, "r", encoding="utf-8")


def _is_jsonl(source) -> bool:
    return isinstance(source, (str, os.PathLike)) and str(source).endswith(".jsonl")


def parse_trace_file(source, annotations=None, devices: Optional[dict] = None,
                     origin: Union[float, str] = 0.0, jsonl: Optional[bool] = None) -> Capture:
    """Parse a packet file (path or open text stream) into a Capture.

    ``origin`` is subtracted from every timestamp; pass ``"first"`` to make
    the earliest packet time zero. Lines out of time order are stable-sorted
    and counted in ``capture.unsorted_lines``. ``annotations`` may be a path
    or stream in the annotation format, ``devices`` a flow_id -> metadata map.
    """
    jsonl = _is_jsonl(source) if jsonl is None else jsonl
    fh = _open_text(source)
    try:
        raw = [(n, line.strip()) for n, line in enumerate(fh, start=1)]
    finally:
        if fh is not source:
            fh.close()
    raw = [(n, line) for n, line in raw if line and not line.startswith("#")]

    shift = 0.0
    if origin == "first":
        firsts = []
        for n, line in raw:
            try:
                firsts.append(float(json.loads(line)["timestamp"]) if jsonl else float(line.split()[0]))
            except (ValueError, KeyError, IndexError, TypeError):
                raise TraceFormatError("bad timestamp", n) from None
        shift = min(firsts) if firsts else 0.0
    elif origin != 0.0:
        shift = float(origin)

    by_flow: "OrderedDict[str, list[PacketRecord]]" = OrderedDict()
    unsorted = 0
    last_ts: dict[str, float] = {}
    for n, line in raw:
        if jsonl:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"bad JSON: {exc.msg}", n) from None
            rec = record_from_json(obj, n, shift)
        else:
            rec = parse_record(line, n, shift)
        if rec.timestamp < last_ts.get(rec.flow_id, -1.0):
            unsorted += 1
        last_ts[rec.flow_id] = rec.timestamp
        by_flow.setdefault(rec.flow_id, []).append(rec)
    if unsorted:
        log.warning("%d out-of-order packet lines were re-sorted", unsorted)

    flow_notes: dict[str, list[LabeledInterval]] = defaultdict(list)
    capture_notes: list[LabeledInterval] = []
    if annotations is not None:
        for interval, flow_id in read_annotations(annotations):
            (flow_notes[flow_id] if flow_id else capture_notes).append(interval)

    devices = devices or {}
    traces: "OrderedDict[str, Trace]" = OrderedDict()
    for flow_id, recs in by_flow.items():
        meta = devices.get(flow_id) or DeviceMeta(protocol=recs[0].protocol)
        traces[flow_id] = Trace.from_unsorted(recs, meta, flow_notes.get(flow_id, ()))
    return Capture(traces, capture_notes, unsorted)


def read_annotations(source, jsonl: Optional[bool] = None) -> list[tuple[LabeledInterval, Optional[str]]]:
    jsonl = _is_jsonl(source) if jsonl is None else jsonl
    fh = _open_text(source)
    out = []
    try:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if jsonl:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TraceFormatError(f"bad JSON: {exc.msg}", n) from None
                out.append(annotation_from_json(obj, n))
            else:
                out.append(parse_annotation(line, n))
    finally:
        if fh is not source:
            fh.close()
    return out


def serialize_capture(capture: Capture, jsonl: bool = False) -> str:
    lines = []
    for r in capture.records():
        lines.append(json.dumps(record_to_json(r)) if jsonl else format_record(r))
    return "".join(line + "\n" for line in lines)


def serialize_annotations(capture: Capture, jsonl: bool = False) -> str:
    lines = []
    for a in capture.annotations:
        lines.append(json.dumps(annotation_to_json(a)) if jsonl else format_annotation(a))
    for flow_id, trace in capture.traces.items():
        for a in trace.annotations:
            lines.append(json.dumps(annotation_to_json(a, flow_id)) if jsonl else format_annotation(a, flow_id))
    return "".join(line + "\n" for line in lines)


def devices_to_json(capture: Capture) -> dict:
    return {flow_id: {"brand": t.meta.brand, "device_type": t.meta.device_type,
                      "protocol": t.meta.protocol.value}
            for flow_id, t in capture.traces.items()}


def devices_from_json(d: dict) -> dict[str, DeviceMeta]:
    return {flow_id: DeviceMeta(m.get("brand", "unknown"), m.get("device_type", "unknown"),
                                Protocol(m.get("protocol", "wifi")))
            for flow_id, m in d.items()}


def write_capture(capture: Capture, out_dir: PathLike, jsonl: bool = False,
                  with_devices: bool = True) -> Path:
    """Write packets, annotations and (optionally) device metadata into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = ".jsonl" if jsonl else ""
    (out / (TRACE_FILE + suffix)).write_text(serialize_capture(capture, jsonl), encoding="utf-8")
    (out / (ANNOTATION_FILE + suffix)).write_text(serialize_annotations(capture, jsonl), encoding="utf-8")
    if with_devices:
        (out / DEVICES_FILE).write_text(json.dumps(devices_to_json(capture), indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    return out


def read_capture(in_dir: PathLike) -> Capture:
    src = Path(in_dir)
    if not src.is_dir():
        raise FileNotFoundError(f"capture directory not found: {src}")
    trace_path = src / TRACE_FILE
    jsonl = False
    if not trace_path.exists() and (src / (TRACE_FILE + ".jsonl")).exists():
        trace_path, jsonl = src / (TRACE_FILE + ".jsonl"), True
    if not trace_path.exists():
        raise FileNotFoundError(f"no {TRACE_FILE} in {src}")
    ann = src / (ANNOTATION_FILE + (".jsonl" if jsonl else ""))
    dev = src / DEVICES_FILE
    devices = devices_from_json(json.loads(dev.read_text(encoding="utf-8"))) if dev.exists() else None
    return parse_trace_file(trace_path, ann if ann.exists() else None, devices, jsonl=jsonl)


# --------------------------------------------------------------------------

def to_splt(t: Trace) -> SpltMatrix:
    """SPLT rows: one ``[timestamp, direction, length]`` per packet."""
    if not len(t):
        raise ValueError("cannot convert an empty trace to SPLT")
    rows = np.empty((len(t), 3), dtype=float)
    for i, r in enumerate(t.records):
        rows[i, 0] = r.timestamp
        rows[i, 1] = 1.0 if r.direction is Direction.INCOMING else 0.0
        rows[i, 2] = r.length
    return SpltMatrix(rows, t.flow_id or "")


def split_flows(c: Capture, by: SplitBy = SplitBy.FLOW_ID) -> list[Trace]:
    """Partition every record of the capture by flow id or by protocol."""
    if not c.traces:
        raise ValueError("capture is empty")
    if by is SplitBy.FLOW_ID:
        return [t for t in c.traces.values() if len(t)]
    groups: "OrderedDict[Protocol, list[PacketRecord]]" = OrderedDict()
    for r in c.records():
        groups.setdefault(r.protocol, []).append(r)
    return [Trace(tuple(recs), DeviceMeta(protocol=proto)) for proto, recs in groups.items()]


def is_coordinator(t: Trace) -> bool:
    """True for the ZigBee hub flow, which always owns network address 0x0000."""
    return t.meta.protocol is Protocol.ZIGBEE and t.flow_id == ZIGBEE_COORDINATOR


def capture_from_traces(traces: Iterable[Trace], annotations: Iterable[LabeledInterval] = ()) -> Capture:
    out: "OrderedDict[str, Trace]" = OrderedDict()
    for t in traces:
        if t.flow_id is None:
            continue
        if t.flow_id in out:
            raise ValueError(f"duplicate flow id {t.flow_id!r}")
        out[t.flow_id] = t
    return Capture(out, list(annotations))
