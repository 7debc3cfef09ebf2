"""Spoofed-traffic countermeasure and the harness that measures its effect.

A defender injects fake packets into a device's flow. With burst mimicry
the fake traffic is drawn from the device's own burst models and placed at
idle times, so an observer sees activity that never happened.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    IntervalKind,
    LabeledInterval,
    MetricReport,
    PacketRecord,
    Trace,
    classification_report,
    macro_average,
)
from .features import recommend_window, ts_feature_matrix
from .learners import ForestParams
from .simulate import DeviceArchetype, catalog_by_identity
from .traceio import to_splt

MAX_RATE = 0.95
NONE_LABEL = "none"


class Mimicry(str, Enum):
    BURST_MIMIC = "burst"
    UNIFORM_NOISE = "uniform"


class Stage(str, Enum):
    DETECTION = "detection"
    CLASSIFICATION = "classification"


@dataclass(frozen=True)
class InjectionPolicy:
    rate: float
    mimicry: Mimicry = Mimicry.BURST_MIMIC
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= MAX_RATE:
            raise ValueError(f"injection rate must lie in [0, {MAX_RATE}], got {self.rate}")


@dataclass(frozen=True)
class Injection:
    trace: Trace
    spans: tuple[tuple[float, float, str], ...]   # (start, end, mimicked action) per fake burst


def _spoof_rng(p: InjectionPolicy, flow_id: str) -> np.random.Generator:
    from .simulate import _flow_key
    return np.random.default_rng(np.random.SeedSequence([int(p.seed), _flow_key(flow_id), 0xDEF]))


def _busy(start: float, end: float, acts: Sequence[LabeledInterval]) -> bool:
    return any(a.overlaps(start, end) for a in acts)


def inject_with_spans(t: Trace, p: InjectionPolicy, archetype: Optional[DeviceArchetype] = None,
                      max_tries: int = 200) -> Injection:
    """Inject ``floor(rate * N)`` spoofed packets and report the fake bursts.

    Spoofed packets come from one sequential stream per (seed, flow), so the
    packets injected at a lower rate are a prefix of those at a higher rate.
    """
    if not len(t):
        raise ValueError("cannot inject into an empty trace")
    n_spoof = int(math.floor(p.rate * len(t) + 1e-9))
    if n_spoof == 0:
        return Injection(t, ())
    flow = t.flow_id
    proto = t.records[0].protocol
    rng = _spoof_rng(p, flow)
    t0, t1 = t.records[0].timestamp, t.end_time
    spoof: list[PacketRecord] = []
    spans = []
    if p.mimicry is Mimicry.UNIFORM_NOISE:
        picks = rng.integers(0, len(t), size=n_spoof)
        times = rng.uniform(t0, t1, size=n_spoof)
        for i, ts in zip(picks, times):
            r = t.records[int(i)]
            spoof.append(PacketRecord(float(ts), r.direction, r.length, flow, proto, True))
    else:
        if archetype is None:
            archetype = catalog_by_identity().get(t.meta.identity)
        if archetype is None or not archetype.actions:
            raise ValueError(f"no burst models known for {t.meta.identity}; pass an archetype")
        acts = t.intervals(IntervalKind.DEVICE_ACTIVITY)
        names = list(archetype.actions)
        while len(spoof) < n_spoof:
            action = names[int(rng.integers(len(names)))]
            model = archetype.actions[action]
            hi = max(t0, t1 - model.duration_s)
            start = float(rng.uniform(t0, hi))
            for _ in range(max_tries):
                if not _busy(start, start + model.duration_s, acts):
                    break
                start = float(rng.uniform(t0, hi))
            burst = model.draw(rng, start, flow, proto, spoofed=True)
            burst = [r for r in burst if r.timestamp <= t1][:n_spoof - len(spoof)]
            if burst:
                spoof.extend(burst)
                spans.append((start, min(start + model.duration_s, t1), action))
    out = Trace.from_unsorted(list(t.records) + spoof, t.meta, t.annotations)
    return Injection(out, tuple(spans))


def inject_spoof(t: Trace, p: InjectionPolicy, archetype: Optional[DeviceArchetype] = None) -> Trace:
    return inject_with_spans(t, p, archetype).trace


# --------------------------------------------------------------------------
# degradation curves

@dataclass(frozen=True)
class DegradationCurve:
    stage: Stage
    points: tuple[tuple[float, MetricReport], ...]

    def __post_init__(self):
        rates = [r for r, _ in self.points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("curve rates must be strictly increasing")
        if not rates or rates[0] != 0.0:
            raise ValueError("curve must include the rate-0 baseline")

    @property
    def rates(self) -> list[float]:
        return [r for r, _ in self.points]

    def f1(self) -> list[Optional[float]]:
        return [m.f1 for _, m in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rate", "f1", "precision", "recall", "accuracy"])
        for r, m in self.points:
            w.writerow([repr(r)] + ["" if v is None else repr(v) for v in (m.f1, m.precision, m.recall, m.accuracy)])
        return buf.getvalue()

    def to_long_json(self) -> list[dict]:
        """Plot-ready rows: one (stage, rate, metric, value) record per point."""
        rows = []
        for r, m in self.points:
            for name in ("f1", "precision", "recall", "accuracy"):
                rows.append({"stage": self.stage.value, "rate": r, "metric": name, "value": getattr(m, name)})
        return rows

    def to_json(self) -> dict:
        return {"stage": self.stage.value, "points": [{"rate": r, "report": m.to_dict()} for r, m in self.points]}

    @classmethod
    def from_json(cls, d: Mapping) -> "DegradationCurve":
        return cls(Stage(d["stage"]), tuple((float(p["rate"]), MetricReport.from_dict(p["report"]))
                                            for p in d["points"]))


@dataclass(frozen=True)
class DefenseScenario:
    """Train and test traffic of the defended devices, keyed by flow id."""
    train: Mapping[str, Trace]
    test: Mapping[str, Trace]
    archetypes: Mapping[str, DeviceArchetype]


def defense_scenario(seed: int, duration_s: float = 1800.0, events_per_device: int = 8,
                     catalog: Optional[Sequence[DeviceArchetype]] = None) -> DefenseScenario:
    """Every action-bearing archetype, with sparse activity so idle traffic dominates."""
    from .simulate import builtin_catalog, catalog_scenario, generate_scenario

    cat = [a for a in (catalog if catalog is not None else builtin_catalog()) if a.actions]
    train = generate_scenario(catalog_scenario(duration_s, events_per_device, seed, cat), seed)
    test = generate_scenario(catalog_scenario(duration_s, events_per_device, seed + 1, cat), seed + 1)
    arch = {}
    for a in cat:
        for flow, t in train.traces.items():
            if t.meta.identity == a.identity:
                arch[flow] = a
    return DefenseScenario(dict(train.traces), dict(test.traces), arch)


def defense_scenario_from_script(make_script, seed: int) -> DefenseScenario:
    """Train and test captures from ``make_script(seed)`` and ``make_script(seed + 1)``.

    Only flows whose archetype has actions are defended.
    """
    from .simulate import generate_scenario

    caps, arch = [], {}
    for s in (seed, seed + 1):
        script = make_script(s)
        caps.append(generate_scenario(script, s))
        for d in script.devices:
            if d.archetype.actions:
                arch[d.flow_id] = d.archetype
    keep = [f for f in arch if f in caps[0].traces and f in caps[1].traces]
    return DefenseScenario({f: caps[0].traces[f] for f in keep}, {f: caps[1].traces[f] for f in keep},
                           {f: arch[f] for f in keep})


def _inject(traces: Mapping[str, Trace], arch: Mapping[str, DeviceArchetype], rate: float, seed: int,
            mimicry: Mimicry, enabled: bool) -> dict[str, Injection]:
    out = {}
    for flow, t in traces.items():
        if not enabled or rate == 0:
            out[flow] = Injection(t, ())
        else:
            out[flow] = inject_with_spans(t, InjectionPolicy(rate, mimicry, seed), arch.get(flow))
    return out


def _detection_point(train: Mapping[str, Injection], test: Mapping[str, Injection],
                     arch: Mapping[str, DeviceArchetype], seed: int, k: int) -> MetricReport:
    from .pipeline import LearnerSpec, stage2_detect, stage2_report, stage2_train, stage2_truth

    reports = []
    for flow, inj in train.items():
        W = recommend_window(arch[flow].activity_duration)
        # labels come from real annotations only, so spoofed windows are 0
        det = stage2_train([inj.trace.without_spoof_flags()], W, LearnerSpec("knn", k=k), seed)
        tt = test[flow].trace.without_spoof_flags()
        series = stage2_detect(tt, det)
        reports.append(stage2_report([series], [stage2_truth(tt, W, tt.end_time)]))
    return macro_average(reports)


def _segments(inj: Injection):
    from .pipeline import StateSegment, truth_segments

    t = inj.trace.without_spoof_flags()
    ident = str(t.meta.identity)
    segs = truth_segments(t, lambda a: f"{ident}:{a.label}")
    m = to_splt(t)
    for start, end, _ in inj.spans:
        stop = float(np.nextafter(end, np.inf))
        pk = m.slice_time(start, stop)
        if len(pk):
            segs.append(StateSegment(m.flow_id, start, stop, pk, NONE_LABEL))
    return segs


def _classification_point(train: Mapping[str, Injection], test: Mapping[str, Injection], seed: int,
                          params: ForestParams, jobs: int) -> MetricReport:
    from .learners import forest_fit, forest_predict

    tr = [s for inj in train.values() for s in _segments(inj)]
    te = [s for inj in test.values() for s in _segments(inj)]
    model = forest_fit(ts_feature_matrix(tr), [s.label for s in tr], params, seed, jobs=jobs)
    pred = forest_predict(model, ts_feature_matrix(te))
    y = [s.label for s in te]
    real = sorted({lab for lab in y if lab != NONE_LABEL})
    # spoofed segments are confusers: predicting a real action for them is a false positive
    return classification_report(y, pred, real)


def evaluate_defense(scenario: DefenseScenario, stage: Stage, rates: Sequence[float], seed: int,
                     mimicry: Mimicry = Mimicry.BURST_MIMIC, inject_train: bool = True,
                     inject_test: bool = True, k: int = 5, params: ForestParams = ForestParams(),
                     jobs: int = 1) -> DegradationCurve:
    """Attack quality as a function of injection rate.

    For every rate the spoofed traffic is added to the training and/or test
    traffic, the stage's classifier is retrained, and it is scored against
    the real ground truth.
    """
    rates = [float(r) for r in rates]
    if 0.0 not in rates:
        raise ValueError("rates must include 0 for the baseline")
    points = []
    for rate in sorted(set(rates)):
        tr = _inject(scenario.train, scenario.archetypes, rate, seed, mimicry, inject_train)
        te = _inject(scenario.test, scenario.archetypes, rate, seed + 7919, mimicry, inject_test)
        if stage is Stage.DETECTION:
            rep = _detection_point(tr, te, scenario.archetypes, seed, k)
        else:
            rep = _classification_point(tr, te, seed, params, jobs)
        points.append((rate, rep))
    return DegradationCurve(stage, tuple(points))


def is_degrading(curve: DegradationCurve, tolerance: float = 0.03) -> bool:
    """Baseline is the best point and no step rises by more than ``tolerance``."""
    f1 = [v if v is not None else 0.0 for v in curve.f1()]
    return all(v <= f1[0] for v in f1[1:]) and all(b <= a + tolerance for a, b in zip(f1, f1[1:]))
