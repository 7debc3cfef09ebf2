"""Seeded generator of labeled smart-home traffic.

Every device emits periodic heartbeats, one burst per scripted action and,
depending on its radio, protocol quirks (ZigBee repeater broadcasts, BLE
advertising). Ground truth is written as annotations on the generated trace.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    BLE_ADVERTISING_CHANNELS,
    DeviceIdentity,
    DeviceMeta,
    Direction,
    IntervalKind,
    LabeledInterval,
    PacketRecord,
    Protocol,
    Trace,
    ZIGBEE_COORDINATOR,
)
from .traceio import Capture, capture_from_traces

# capture-level annotation label marking spans where the controller is away from home
AWAY_LABEL = "controller-away"
IDLE = "Idle"


class LengthKind(str, Enum):
    CONSTANT = "constant"
    UNIFORM = "uniform"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class LengthDist:
    kind: LengthKind
    value: int = 0
    low: int = 0
    high: int = 0
    values: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        support = self.support()
        if not support or min(support) < 1:
            raise ValueError(f"length distribution support must be >= 1 byte: {self}")
        if self.kind is LengthKind.CATEGORICAL and self.weights and len(self.weights) != len(self.values):
            raise ValueError("categorical weights and values differ in length")

    @classmethod
    def constant(cls, value: int) -> "LengthDist":
        return cls(LengthKind.CONSTANT, value=int(value))

    @classmethod
    def uniform(cls, low: int, high: int) -> "LengthDist":
        return cls(LengthKind.UNIFORM, low=int(low), high=int(high))

    @classmethod
    def categorical(cls, values: Sequence[int], weights: Sequence[float] = ()) -> "LengthDist":
        return cls(LengthKind.CATEGORICAL, values=tuple(int(v) for v in values),
                   weights=tuple(float(w) for w in weights))

    def support(self) -> tuple[int, ...]:
        if self.kind is LengthKind.CONSTANT:
            return (self.value,)
        if self.kind is LengthKind.UNIFORM:
            return (self.low, self.high) if self.low <= self.high else ()
        return self.values

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind is LengthKind.CONSTANT:
            return np.full(n, self.value, dtype=np.int64)
        if self.kind is LengthKind.UNIFORM:
            return rng.integers(self.low, self.high + 1, size=n)
        p = None
        if self.weights:
            w = np.asarray(self.weights, dtype=float)
            p = w / w.sum()
        return rng.choice(np.asarray(self.values, dtype=np.int64), size=n, p=p)

    @property
    def mean(self) -> float:
        if self.kind is LengthKind.CONSTANT:
            return float(self.value)
        if self.kind is LengthKind.UNIFORM:
            return (self.low + self.high) / 2
        w = np.asarray(self.weights or [1.0] * len(self.values), dtype=float)
        return float(np.dot(w / w.sum(), self.values))

    def to_json(self) -> dict:
        if self.kind is LengthKind.CONSTANT:
            return {"kind": "constant", "value": self.value}
        if self.kind is LengthKind.UNIFORM:
            return {"kind": "uniform", "low": self.low, "high": self.high}
        d = {"kind": "categorical", "values": list(self.values)}
        if self.weights:
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "LengthDist":
        kind = LengthKind(d["kind"])
        if kind is LengthKind.CONSTANT:
            return cls.constant(d["value"])
        if kind is LengthKind.UNIFORM:
            return cls.uniform(d["low"], d["high"])
        return cls.categorical(d["values"], d.get("weights", ()))


@dataclass(frozen=True)
class BurstModel:
    duration_s: float
    count_mean: int
    count_spread: int
    length: LengthDist
    incoming_fraction: float = 0.5

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("burst duration must be positive")
        if self.count_mean < 1 or self.count_spread < 0:
            raise ValueError("burst packet count must have mean >= 1 and spread >= 0")
        if not 0.0 <= self.incoming_fraction <= 1.0:
            raise ValueError("incoming_fraction must lie in [0, 1]")

    @property
    def count_range(self) -> tuple[int, int]:
        return max(1, self.count_mean - self.count_spread), self.count_mean + self.count_spread

    def draw(self, rng: np.random.Generator, start: float, flow_id: str, protocol: Protocol,
             spoofed: bool = False) -> list[PacketRecord]:
        lo, hi = self.count_range
        n = int(rng.integers(lo, hi + 1))
        times = start + np.sort(rng.uniform(0.0, self.duration_s, size=n))
        lengths = self.length.sample(rng, n)
        incoming = rng.random(n) < self.incoming_fraction
        return [PacketRecord(float(t), Direction.INCOMING if i else Direction.OUTGOING, int(l),
                             flow_id, protocol, spoofed)
                for t, l, i in zip(times, lengths, incoming)]

    def to_json(self) -> dict:
        return {"duration_s": self.duration_s, "count_mean": self.count_mean,
                "count_spread": self.count_spread, "incoming_fraction": self.incoming_fraction,
                "length": self.length.to_json()}

    @classmethod
    def from_json(cls, d: Mapping) -> "BurstModel":
        return cls(float(d["duration_s"]), int(d["count_mean"]), int(d.get("count_spread", 0)),
                   LengthDist.from_json(d["length"]), float(d.get("incoming_fraction", 0.5)))


@dataclass(frozen=True)
class Heartbeat:
    period_s: float
    jitter_s: float
    length: LengthDist
    incoming_fraction: float = 0.5

    def __post_init__(self):
        if self.period_s <= 0:
            raise ValueError("heartbeat period must be positive")
        if not 0 <= self.jitter_s < self.period_s / 2:
            raise ValueError("heartbeat jitter must lie in [0, period/2)")


@dataclass(frozen=True)
class Quirks:
    repeater_period_s: Optional[float] = None
    repeater_length: int = 53
    advertising_rate_hz: Optional[float] = None
    advertising_length: int = 37
    advertising_channels: tuple[int, ...] = BLE_ADVERTISING_CHANNELS


@dataclass(frozen=True)
class DeviceArchetype:
    identity: DeviceIdentity
    protocol: Protocol
    heartbeat: Heartbeat
    actions: Mapping[str, BurstModel]
    quirks: Quirks = Quirks()
    initial_state: str = "idle"
    role: str = "device"

    @property
    def meta(self) -> DeviceMeta:
        return DeviceMeta(self.identity.brand, self.identity.device_type, self.protocol)

    @property
    def activity_duration(self) -> float:
        """Typical duration of one activity: the mean burst duration."""
        if not self.actions:
            raise ValueError(f"{self.identity} has no actions")
        return float(np.mean([b.duration_s for b in self.actions.values()]))

    @property
    def burst_heartbeat_ratio(self) -> float:
        """Smallest burst packet rate divided by the heartbeat rate."""
        hb_rate = 1.0 / self.heartbeat.period_s
        return min(b.count_range[0] / b.duration_s for b in self.actions.values()) / hb_rate

    def to_json(self) -> dict:
        q = self.quirks
        quirks = {}
        if q.repeater_period_s is not None:
            quirks.update(repeater_period_s=q.repeater_period_s, repeater_length=q.repeater_length)
        if q.advertising_rate_hz is not None:
            quirks.update(advertising_rate_hz=q.advertising_rate_hz, advertising_length=q.advertising_length)
        d = {"brand": self.identity.brand, "device_type": self.identity.device_type,
             "protocol": self.protocol.value, "role": self.role, "initial_state": self.initial_state,
             "heartbeat": {"period_s": self.heartbeat.period_s, "jitter_s": self.heartbeat.jitter_s,
                           "incoming_fraction": self.heartbeat.incoming_fraction,
                           "length": self.heartbeat.length.to_json()},
             "actions": {k: v.to_json() for k, v in self.actions.items()}}
        if quirks:
            d["quirks"] = quirks
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "DeviceArchetype":
        hb = d["heartbeat"]
        q = d.get("quirks", {})
        return cls(
            identity=DeviceIdentity(d["brand"], d["device_type"]),
            protocol=Protocol(d["protocol"]),
            heartbeat=Heartbeat(float(hb["period_s"]), float(hb.get("jitter_s", 0.0)),
                                LengthDist.from_json(hb["length"]), float(hb.get("incoming_fraction", 0.5))),
            actions={k: BurstModel.from_json(v) for k, v in d.get("actions", {}).items()},
            quirks=Quirks(q.get("repeater_period_s"), int(q.get("repeater_length", 53)),
                          q.get("advertising_rate_hz"), int(q.get("advertising_length", 37))),
            initial_state=d.get("initial_state", "idle"),
            role=d.get("role", "device"),
        )


def load_catalog(source: Union[str, Path, None] = None) -> list[DeviceArchetype]:
    if source is None:
        text = resources.files("homeleak.data").joinpath("catalog.json").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    archetypes = [DeviceArchetype.from_json(d) for d in json.loads(text)["archetypes"]]
    ids = [a.identity for a in archetypes]
    if len(set(ids)) != len(ids):
        raise ValueError("catalog identities must be unique")
    return archetypes


def builtin_catalog() -> list[DeviceArchetype]:
    return load_catalog()


def catalog_by_identity(catalog: Optional[Sequence[DeviceArchetype]] = None) -> dict[DeviceIdentity, DeviceArchetype]:
    return {a.identity: a for a in (catalog if catalog is not None else builtin_catalog())}


# --------------------------------------------------------------------------
# random streams

def _flow_key(flow_id: str) -> int:
    return int.from_bytes(hashlib.sha256(flow_id.encode("utf-8")).digest()[:8], "little")


def device_rng(seed: int, flow_id: str, stream: int) -> np.random.Generator:
    """Independent generator per (seed, flow, stream) so devices never share draws."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _flow_key(flow_id), stream]))


_HEARTBEAT, _BURSTS, _REPEATER, _ADVERTISING = range(4)


def default_flow_id(a: DeviceArchetype) -> str:
    return f"{a.identity.brand}-{a.identity.device_type}".lower()


def _device_streams(a: DeviceArchetype, events: Sequence[tuple[float, str]], duration_s: float,
                    seed: int, flow_id: str) -> dict[str, list[PacketRecord]]:
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    times = [t for t, _ in events]
    if any(b < a_ for a_, b in zip(times, times[1:])):
        raise ValueError("events must be sorted by time")
    for t, action in events:
        if action not in a.actions:
            raise ValueError(f"unknown action {action!r} for {a.identity}")
        if not 0 <= t or t + a.actions[action].duration_s > duration_s:
            raise ValueError(f"burst of {action!r} at {t} does not fit in [0, {duration_s}]")

    proto = a.protocol
    hb = a.heartbeat
    rng = device_rng(seed, flow_id, _HEARTBEAT)
    phase = rng.uniform(0.0, hb.period_s)
    n = int(np.floor((duration_s - phase) / hb.period_s)) + 1
    base = phase + hb.period_s * np.arange(max(n, 0))
    jitter = rng.uniform(-hb.jitter_s, hb.jitter_s, size=base.size)
    lengths = hb.length.sample(rng, base.size)
    incoming = rng.random(base.size) < hb.incoming_fraction
    t_hb = np.clip(base + jitter, 0.0, None)
    keep = t_hb < duration_s
    heartbeat = [PacketRecord(float(t), Direction.INCOMING if i else Direction.OUTGOING, int(l), flow_id, proto)
                 for t, l, i in zip(t_hb[keep], lengths[keep], incoming[keep])]

    rng = device_rng(seed, flow_id, _BURSTS)
    bursts = []
    for t, action in events:
        bursts.extend(a.actions[action].draw(rng, float(t), flow_id, proto))

    quirk = []
    q = a.quirks
    if q.repeater_period_s:
        # rebroadcast of the coordinator's periodic frame, first one a full period in
        k = np.arange(1, int(np.floor(duration_s / q.repeater_period_s + 1e-9)) + 1)
        quirk.extend(PacketRecord(float(t), Direction.OUTGOING, q.repeater_length, flow_id, proto)
                     for t in k * q.repeater_period_s)
    if q.advertising_rate_hz:
        rng = device_rng(seed, flow_id, _ADVERTISING)
        interval = 1.0 / q.advertising_rate_hz
        t = rng.uniform(0.0, interval)
        while t < duration_s:
            quirk.append(PacketRecord(float(t), Direction.OUTGOING, q.advertising_length, flow_id, proto))
            t += interval + rng.uniform(0.0, 0.01)  # random advertising delay, as on real radios
    return {"heartbeat": heartbeat, "burst": bursts, "quirk": quirk}


def generate_device_trace(a: DeviceArchetype, events: Sequence[tuple[float, str]], duration_s: float,
                          seed: int, flow_id: Optional[str] = None) -> Trace:
    """One device's labeled trace over ``[0, duration_s]``.

    ``events`` are ``(time_s, action)`` pairs; each one becomes a burst drawn
    from that action's BurstModel and a DeviceActivity annotation spanning the
    burst. DeviceState annotations cover the gaps between bursts and carry the
    label of the preceding action (or the archetype's initial state).
    """
    flow_id = flow_id or default_flow_id(a)
    streams = _device_streams(a, events, duration_s, seed, flow_id)
    records = sorted((r for part in streams.values() for r in part), key=lambda r: r.timestamp)
    last = records[-1].timestamp if records else 0.0

    notes = []
    spans = []
    for t, action in events:
        end = min(t + a.actions[action].duration_s, last)
        if end > t:
            notes.append(LabeledInterval(float(t), float(end), IntervalKind.DEVICE_ACTIVITY, action))
        spans.append((float(t), float(t + a.actions[action].duration_s), action))
    state, cursor = a.initial_state, 0.0
    for start, end, action in spans:
        if start > cursor and min(start, last) > cursor:
            notes.append(LabeledInterval(cursor, min(start, last), IntervalKind.DEVICE_STATE, state))
        cursor, state = max(cursor, end), action
    if last > cursor:
        notes.append(LabeledInterval(cursor, last, IntervalKind.DEVICE_STATE, state))
    notes.sort(key=lambda x: (x.start, x.end))
    return Trace(tuple(records), a.meta, tuple(notes))


# --------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class PlacedDevice:
    name: str
    flow_id: str
    archetype: DeviceArchetype
    role: str = "device"


@dataclass(frozen=True)
class ScriptEvent:
    time_s: float
    device: int
    action: str
    activity: Optional[str] = None


@dataclass
class ScenarioScript:
    duration_s: float
    devices: list[PlacedDevice]
    events: list[ScriptEvent] = field(default_factory=list)
    activities: list[LabeledInterval] = field(default_factory=list)
    away: list[tuple[float, float]] = field(default_factory=list)

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("scenario duration must be positive")
        flows = [d.flow_id for d in self.devices]
        if len(set(flows)) != len(flows):
            raise ValueError("device flow ids must be unique")
        prev = -np.inf
        for ev in self.events:
            if ev.time_s < prev:
                raise ValueError("scenario events must be time-ordered")
            prev = ev.time_s
            if not 0 <= ev.time_s <= self.duration_s:
                raise ValueError(f"event at {ev.time_s} outside [0, {self.duration_s}]")
            if not 0 <= ev.device < len(self.devices):
                raise ValueError(f"event refers to unknown device index {ev.device}")

    def device_index(self, name: str) -> int:
        for i, d in enumerate(self.devices):
            if d.name == name or d.flow_id == name:
                return i
        raise KeyError(f"no device named {name!r} in scenario")

    def roles(self, role: str) -> list[PlacedDevice]:
        return [d for d in self.devices if d.role == role]


# events of one activity further apart than this start a new span
ACTIVITY_JOIN_GAP_S = 10.0


def _activity_spans(events: Sequence[ScriptEvent], devices: Sequence[PlacedDevice]) -> list[LabeledInterval]:
    """Group consecutive events sharing an activity label into one span.

    A gap of more than ``ACTIVITY_JOIN_GAP_S`` after the previous burst ends
    the span, so repeated activities with the same label stay separate.
    """
    spans = []
    current = None
    for ev in events:
        end = ev.time_s + devices[ev.device].archetype.actions[ev.action].duration_s
        if ev.activity is None:
            if current:
                spans.append(current)
                current = None
            continue
        if current and current[2] == ev.activity and ev.time_s <= current[1] + ACTIVITY_JOIN_GAP_S:
            current = (current[0], max(current[1], end), ev.activity)
        else:
            if current:
                spans.append(current)
            current = (ev.time_s, end, ev.activity)
    if current:
        spans.append(current)
    return [LabeledInterval(s, e, IntervalKind.USER_ACTIVITY, lab) for s, e, lab in spans]


def generate_scenario(s: ScenarioScript, seed: int) -> Capture:
    """Generate every device's trace and attach user-activity ground truth."""
    s.validate()
    traces = []
    for i, dev in enumerate(s.devices):
        events = [(ev.time_s, ev.action) for ev in s.events if ev.device == i]
        traces.append(generate_device_trace(dev.archetype, events, s.duration_s, seed, dev.flow_id))
    capture = capture_from_traces(traces)
    notes = list(s.activities) if s.activities else _activity_spans(s.events, s.devices)
    notes += [LabeledInterval(a, b, IntervalKind.DEVICE_STATE, AWAY_LABEL) for a, b in s.away]
    capture.annotations = sorted(notes, key=lambda x: (x.start, x.end))
    return capture


# --------------------------------------------------------------------------
# the benchmark home and its activity templates

@dataclass(frozen=True)
class SubActivity:
    devices: tuple[str, ...]
    controller: bool = False
    at_home: bool = True


# Sub-activity device sets per user activity. Activity-4 follows the user
# walking from outside to the bedroom through the hallway.
ACTIVITY_TEMPLATES: dict[str, tuple[SubActivity, ...]] = {
    "Activity-1": (SubActivity(("P1",), controller=True),),
    "Activity-2": (SubActivity(("P1",), controller=True, at_home=False),),
    "Activity-3": (SubActivity(("M2", "T1")),),
    "Activity-4": (
        SubActivity(("L1",)),
        SubActivity(("L1", "D1", "Lo1")),
        SubActivity(("L2", "M1", "Li1")),
        SubActivity(("Li2", "L2", "M2", "D1", "Lo1")),
        SubActivity(("L2", "M2", "Li2")),
    ),
    "Activity-5": (
        SubActivity(("M1", "Li1")),
        SubActivity(("D1", "Lo1", "M1")),
        SubActivity(("Lo1", "L1"), at_home=False),
    ),
    "Activity-6": (
        SubActivity(("W1",)),
        SubActivity(("W1", "M2")),
        SubActivity(("W1",)),
    ),
}
TIME_INDEPENDENT = ("Activity-1", "Activity-2", "Activity-3")
TIME_DEPENDENT = ("Activity-4", "Activity-5", "Activity-6")
ACTIVITY_LABELS = TIME_INDEPENDENT + TIME_DEPENDENT

# name, flow id, catalog identity, role
HOME_LAYOUT = (
    ("M1", "0x3c01", "SmartThings/MotionSensor", "sensor"),
    ("M2", "0x3c02", "SmartThings/MotionSensor", "sensor"),
    ("D1", "0x5d01", "SmartThings/MultiSensor", "sensor"),
    ("W1", "0x5d02", "SmartThings/MultiSensor", "sensor"),
    ("Li1", "c4:7c:8d:00:00:01", "Xiaomi/LightSensor", "sensor"),
    ("Li2", "c4:7c:8d:00:00:02", "Xiaomi/LightSensor", "sensor"),
    ("L1", "0x7a01", "Osram/Lightify", "device"),
    ("L2", "0x7a02", "Osram/Lightify", "device"),
    ("Lo1", "d8:61:62:00:00:01", "August/SmartLock", "device"),
    ("P1", "50:c7:bf:00:00:01", "TPLink/HS110Plug", "device"),
    ("T1", "44:61:32:00:00:01", "Ecobee/Thermostat", "device"),
    ("C1", "b0:c5:54:00:00:01", "DLink/Camera", "device"),
    ("Ph", "f0:18:98:00:00:01", "Generic/Smartphone", "controller"),
    ("Hub", ZIGBEE_COORDINATOR, "SmartThings/Hub", "hub"),
)
# devices with traffic in the home but no part in the activity bit array
HOME_BACKGROUND = ("C1",)


def home_devices(catalog: Optional[Sequence[DeviceArchetype]] = None) -> list[PlacedDevice]:
    by_id = catalog_by_identity(catalog)
    return [PlacedDevice(name, flow, by_id[DeviceIdentity.parse(ident)], role)
            for name, flow, ident, role in HOME_LAYOUT]


@dataclass(frozen=True)
class PlannedActivity:
    start_s: float
    label: str
    sub_durations: tuple[float, ...]

    @property
    def end_s(self) -> float:
        return self.start_s + sum(self.sub_durations)


def random_activity_plan(rng: np.random.Generator, duration_s: float, labels: Sequence[str] = ACTIVITY_LABELS,
                         gap_s: tuple[float, float] = (8.0, 20.0), sub_s: tuple[float, float] = (6.0, 8.0),
                         lead_s: float = 5.0) -> list[PlannedActivity]:
    """Activities drawn uniformly from ``labels`` separated by idle gaps."""
    plan = []
    t = lead_s + rng.uniform(*gap_s)
    while True:
        label = str(labels[int(rng.integers(len(labels)))])
        subs = tuple(float(rng.uniform(*sub_s)) for _ in ACTIVITY_TEMPLATES[label])
        item = PlannedActivity(float(t), label, subs)
        if item.end_s + lead_s > duration_s:
            break
        plan.append(item)
        t = item.end_s + rng.uniform(*gap_s)
    return plan


def expand_plan(plan: Sequence[PlannedActivity], devices: Sequence[PlacedDevice], duration_s: float,
                rng: Optional[np.random.Generator] = None, offset_s: float = 0.3) -> ScenarioScript:
    """Turn planned user activities into per-device events.

    A device listed in a sub-activity fires at the sub-activity start (plus a
    small random offset). Devices cycle through their actions in catalog order,
    so a light alternates ON/OFF. The controller fires ``app_use`` when the
    sub-activity is driven from the phone; away sub-activities become
    controller-away spans.
    """
    rng = rng or np.random.default_rng(0)
    index = {d.name: i for i, d in enumerate(devices)}
    controller = [i for i, d in enumerate(devices) if d.role == "controller"]
    cycle = {i: 0 for i in range(len(devices))}
    events, activities, away = [], [], []
    for item in plan:
        t = item.start_s
        for sub, dur in zip(ACTIVITY_TEMPLATES[item.label], item.sub_durations):
            fired = [index[name] for name in sub.devices]
            if sub.controller:
                fired += controller
            for i in fired:
                actions = list(devices[i].archetype.actions)
                action = actions[cycle[i] % len(actions)]
                cycle[i] += 1
                events.append(ScriptEvent(float(t + rng.uniform(0, offset_s)), i, action, item.label))
            if not sub.at_home:
                away.append((float(t), float(t + dur)))
            t += dur
        activities.append(LabeledInterval(item.start_s, item.end_s, IntervalKind.USER_ACTIVITY, item.label))
    events.sort(key=lambda e: (e.time_s, e.device))
    return ScenarioScript(duration_s, list(devices), events, activities, away)


def home_scenario(duration_s: float, seed: int, labels: Sequence[str] = ACTIVITY_LABELS,
                  catalog: Optional[Sequence[DeviceArchetype]] = None) -> ScenarioScript:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE7]))
    plan = random_activity_plan(rng, duration_s, labels)
    return expand_plan(plan, home_devices(catalog), duration_s, rng)


def random_device_events(a: DeviceArchetype, duration_s: float, n_events: int, rng: np.random.Generator,
                         min_gap_s: float = 4.0, lead_s: float = 2.0) -> list[tuple[float, str]]:
    """``n_events`` non-overlapping bursts with uniformly random actions and gaps."""
    if not a.actions or n_events <= 0:
        return []
    names = list(a.actions)
    chosen = [names[int(i)] for i in rng.integers(len(names), size=n_events)]
    busy = sum(a.actions[c].duration_s + min_gap_s for c in chosen)
    slack = duration_s - 2 * lead_s - busy
    if slack <= 0:
        raise ValueError("too many events for the requested duration")
    gaps = rng.dirichlet(np.ones(n_events + 1)) * slack
    events, t = [], lead_s
    for gap, action in zip(gaps, chosen):
        t += gap
        events.append((float(t), action))
        t += a.actions[action].duration_s + min_gap_s
    return events


def catalog_scenario(duration_s: float, events_per_device: int, seed: int,
                     catalog: Optional[Sequence[DeviceArchetype]] = None) -> ScenarioScript:
    """Every catalog archetype once, each with randomly scheduled actions."""
    catalog = list(catalog) if catalog is not None else builtin_catalog()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xCA7]))
    devices, events = [], []
    for i, a in enumerate(catalog):
        flow = ZIGBEE_COORDINATOR if a.role == "hub" and a.protocol is Protocol.ZIGBEE else default_flow_id(a)
        devices.append(PlacedDevice(a.identity.device_type, flow, a, a.role))
        for t, action in random_device_events(a, duration_s, events_per_device, rng):
            events.append(ScriptEvent(t, i, action))
    events.sort(key=lambda e: (e.time_s, e.device))
    return ScenarioScript(duration_s, devices, events)


# --------------------------------------------------------------------------
# JSON scenario documents

def _resolve_archetype(ref, by_id: Mapping[DeviceIdentity, DeviceArchetype]) -> DeviceArchetype:
    if isinstance(ref, Mapping):
        return DeviceArchetype.from_json(ref)
    ident = DeviceIdentity.parse(str(ref))
    if ident not in by_id:
        raise ValueError(f"unknown archetype {ref!r}")
    return by_id[ident]


def script_from_json(doc: Mapping, catalog: Optional[Sequence[DeviceArchetype]] = None,
                     seed: int = 0) -> ScenarioScript:
    """Build a script from a scenario document.

    The document lists ``devices`` (name, flow_id, archetype, role) and either
    explicit ``events`` or a ``plan`` of user activities that is expanded with
    the activity templates. ``"devices": "home"`` selects the bundled home
    layout, and ``"random_plan": true`` draws the plan from ``seed``.
    """
    by_id = catalog_by_identity(catalog)
    duration = float(doc["duration_s"])
    if doc.get("devices") == "home":
        devices = home_devices(catalog)
    else:
        devices = [PlacedDevice(d["name"], d.get("flow_id", d["name"]), _resolve_archetype(d["archetype"], by_id),
                                d.get("role", "device")) for d in doc["devices"]]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE7]))
    if doc.get("random_plan"):
        plan = random_activity_plan(rng, duration, doc.get("labels", ACTIVITY_LABELS))
        return expand_plan(plan, devices, duration, rng)
    if "plan" in doc:
        plan = [PlannedActivity(float(p["start_s"]), p["activity"],
                                tuple(float(x) for x in p.get("sub_durations_s",
                                      [7.0] * len(ACTIVITY_TEMPLATES[p["activity"]]))))
                for p in doc["plan"]]
        return expand_plan(plan, devices, duration, rng)
    names = {d.name: i for i, d in enumerate(devices)}
    events = []
    for ev in doc.get("events", []):
        dev = ev["device"]
        idx = names[dev] if isinstance(dev, str) else int(dev)
        events.append(ScriptEvent(float(ev["time_s"]), idx, ev["action"], ev.get("activity")))
    events.sort(key=lambda e: (e.time_s, e.device))
    activities = [LabeledInterval(float(a["start"]), float(a["end"]), IntervalKind.USER_ACTIVITY, a["label"])
                  for a in doc.get("activities", [])]
    away = [(float(a), float(b)) for a, b in doc.get("away", [])]
    return ScenarioScript(duration, devices, events, activities, away)


def script_to_json(s: ScenarioScript) -> dict:
    return {
        "duration_s": s.duration_s,
        "devices": [{"name": d.name, "flow_id": d.flow_id, "archetype": str(d.archetype.identity),
                     "role": d.role} for d in s.devices],
        "events": [{"time_s": e.time_s, "device": s.devices[e.device].name, "action": e.action,
                    **({"activity": e.activity} if e.activity else {})} for e in s.events],
        "activities": [{"start": a.start, "end": a.end, "label": a.label} for a in s.activities],
        "away": [list(a) for a in s.away],
    }


def load_scenario(path: Union[str, Path], seed: int = 0,
                  catalog: Optional[Sequence[DeviceArchetype]] = None) -> ScenarioScript:
    p = Path(path)
    if not p.exists():
        candidate = resources.files("homeleak.data").joinpath(str(path))
        if candidate.is_file():
            return script_from_json(json.loads(candidate.read_text(encoding="utf-8")), catalog, seed)
        raise FileNotFoundError(f"scenario file not found: {path}")
    return script_from_json(json.loads(p.read_text(encoding="utf-8")), catalog, seed)
