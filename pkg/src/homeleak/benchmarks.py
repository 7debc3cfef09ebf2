"""Seeded synthetic benchmarks for each attack stage.

Every harness builds its own captures from the bundled catalog, so results
depend only on the seed. The acceptance suite and the CLI share these.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import MetricReport
from .features import SelectionMask, recommend_window, select_features, ts_feature_matrix
from .pipeline import (
    HUB_IDENTITY,
    IDLE,
    LearnerSpec,
    Snapshot,
    InferenceResult,
    binary_report,
    cross_validate,
    holdout_eval,
    project_bits,
    stage1_identify,
    stage1_report,
    stage1_train,
    stage2_detect,
    stage2_report,
    stage2_train,
    stage2_truth,
    stage4_infer,
    stage4_train,
    stratified_holdout,
    truth_segments,
)
from .simulate import (
    ACTIVITY_TEMPLATES,
    HOME_LAYOUT,
    TIME_DEPENDENT,
    TIME_INDEPENDENT,
    DeviceArchetype,
    builtin_catalog,
    catalog_scenario,
    default_flow_id,
    generate_scenario,
    random_activity_plan,
)
from .traceio import split_flows

STAGE1_ARCHETYPES = (
    "Belkin/WemoInsightSwitch",
    "TPLink/HS110Plug",
    "DLink/Camera",
    "SmartThings/Outlet",
    "SmartThings/MotionSensor",
    "Osram/Lightify",
    "SmartThings/Hub",
    "August/SmartLock",
)


def _pick(names: Sequence[str], catalog: Optional[Sequence[DeviceArchetype]] = None) -> list[DeviceArchetype]:
    by_name = {str(a.identity): a for a in (catalog if catalog is not None else builtin_catalog())}
    return [by_name[n] for n in names]


def action_archetypes(catalog: Optional[Sequence[DeviceArchetype]] = None) -> list[DeviceArchetype]:
    return [a for a in (catalog if catalog is not None else builtin_catalog()) if a.actions]


# --------------------------------------------------------------------------
# Stage-1

@dataclass(frozen=True)
class Stage1Result:
    accuracy: float
    hub_bypassed: bool
    report: MetricReport
    identified: dict


def stage1_benchmark(seed: int, duration_s: float = 900.0, events_per_device: int = 8,
                     interval_s: float = 10.0, k: int = 5) -> Stage1Result:
    """Train on one capture of the eight archetypes and identify a second one."""
    devices = _pick(STAGE1_ARCHETYPES)
    train = generate_scenario(catalog_scenario(duration_s, events_per_device, seed, devices), seed)
    test_seed = seed + 100
    test = generate_scenario(catalog_scenario(duration_s, events_per_device, test_seed, devices), test_seed)
    model = stage1_train(split_flows(train), interval_s, k, seed)
    ident = stage1_identify(split_flows(test), model, interval_s)
    hub = [f for f, t in test.traces.items() if t.meta.device_type == "Hub"]
    truth = {f: t.meta.identity for f, t in test.traces.items() if f not in hub}
    flows = [f for f in ident if f in truth]
    acc = float(np.mean([ident[f] == truth[f] for f in flows]))
    hub_ok = bool(hub) and all(ident.get(f) == HUB_IDENTITY for f in hub)
    return Stage1Result(acc, hub_ok, stage1_report({f: ident[f] for f in flows}, truth), dict(ident))


# --------------------------------------------------------------------------
# Stage-2

@dataclass(frozen=True)
class Stage2Result:
    """Mean per-device detection F1 keyed by (learner, window multiple).

    ``native`` scores each detector on its own windows; ``grid`` scores the
    detector's output projected onto the duration/4 grid, so detectors with
    different window sizes are judged on the same time resolution.
    """
    native: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    per_device: dict = field(default_factory=dict)


def stage2_benchmark(seed: int, duration_s: float = 1200.0, events_per_device: int = 20,
                     learners: Sequence[str] = ("rf", "knn"), multiples: Sequence[float] = (0.25, 1.0),
                     k: int = 5) -> Stage2Result:
    devices = action_archetypes()
    train = generate_scenario(catalog_scenario(duration_s, events_per_device, seed, devices), seed)
    test_seed = seed + 50
    test = generate_scenario(catalog_scenario(duration_s, events_per_device, test_seed, devices), test_seed)
    out = Stage2Result()
    for kind in learners:
        for mult in multiples:
            native, grid = [], []
            for a in devices:
                flow = default_flow_id(a)
                d = a.activity_duration
                W = d * mult
                det = stage2_train([train.traces[flow]], W, LearnerSpec(kind, k=k), seed)
                t = test.traces[flow]
                series = stage2_detect(t, det)
                native.append(stage2_report([series], [stage2_truth(t, W)]).f1 or 0.0)
                fine = stage2_truth(t, recommend_window(d))
                grid.append(binary_report(fine, project_bits(series, recommend_window(d), len(fine))).f1 or 0.0)
                out.per_device[(kind, mult, str(a.identity))] = native[-1]
            out.native[(kind, mult)] = float(np.mean(native))
            out.grid[(kind, mult)] = float(np.mean(grid))
    return out


# --------------------------------------------------------------------------
# Stage-3

def stage3_dataset(seed: int = 7, duration_s: float = 1800.0, events_per_device: int = 46):
    """Feature matrix of every annotated action, labeled ``identity:action``."""
    cap = generate_scenario(catalog_scenario(duration_s, events_per_device, seed, action_archetypes()), seed)
    segs = []
    for t in cap.traces.values():
        ident = str(t.meta.identity)
        segs += truth_segments(t, lambda a, ident=ident: f"{ident}:{a.label}")
    return ts_feature_matrix(segs), [s.label for s in segs]


@dataclass(frozen=True)
class Stage3Result:
    cv: MetricReport
    holdout: MetricReport
    mask: SelectionMask
    masked_holdout: MetricReport
    n_samples: int
    n_classes: int

    @property
    def reduction(self) -> float:
        return 1.0 - len(self.mask.kept) / len(self.mask.importances)


def stage3_benchmark(seed: int = 7, folds: int = 5, test_fraction: float = 0.25,
                     spec: LearnerSpec = LearnerSpec(), jobs: int = 1) -> Stage3Result:
    X, y = stage3_dataset(seed)
    cv = cross_validate(X, y, folds, spec, seed)
    ho = holdout_eval(X, y, test_fraction, spec, seed)
    # importances come from the training split only, so the hold-out stays unseen
    tr, _ = stratified_holdout(y, test_fraction, seed)
    mask = select_features(X[tr], [y[i] for i in tr], seed, jobs=jobs)
    masked = holdout_eval(mask.apply(X), y, test_fraction, spec, seed)
    return Stage3Result(cv, ho, mask, masked, len(y), len(set(y)))


# --------------------------------------------------------------------------
# Stage-4

_SENSORS = tuple(n for n, _, _, role in HOME_LAYOUT if role == "sensor")
_DEVICES = tuple(n for n, _, _, role in HOME_LAYOUT if role == "device" and n != "C1")


def template_snapshots(seed: int, duration_s: float, labels: Sequence[str], noise: float = 0.0,
                       grid_s: float = 1.0) -> tuple[list[Snapshot], list[str]]:
    """Snapshots sampled straight from the activity templates.

    The named devices of the active sub-activity read 1, M follows the
    controller flag and L the at-home flag; idle time is all zeros with L=1.
    Each bit then flips independently with probability ``noise``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5A4]))
    plan = random_activity_plan(rng, duration_s, labels)
    times = grid_s * np.arange(int(np.floor(duration_s / grid_s)) + 1)
    width = len(_SENSORS) + len(_DEVICES) + 2
    bits = np.zeros((times.size, width), dtype=np.int64)
    bits[:, -1] = 1
    truth = [IDLE] * times.size
    pos = {n: i for i, n in enumerate(_SENSORS + _DEVICES)}
    for item in plan:
        t = item.start_s
        for sub, dur in zip(ACTIVITY_TEMPLATES[item.label], item.sub_durations):
            cover = np.flatnonzero((times >= t) & (times < t + dur))
            for name in sub.devices:
                bits[cover, pos[name]] = 1
            bits[cover, -2] = int(sub.controller)
            bits[cover, -1] = int(sub.at_home)
            for i in cover:
                truth[i] = item.label
            t += dur
    if noise > 0:
        bits ^= (rng.random(bits.shape) < noise).astype(np.int64)
    snaps = [Snapshot.from_bits(float(t), row, len(_SENSORS), len(_DEVICES)) for t, row in zip(times, bits)]
    return snaps, truth


@dataclass(frozen=True)
class Stage4Result:
    independent: InferenceResult
    dependent: InferenceResult


def stage4_benchmark(seed: int, duration_s: float = 1800.0, noise: float = 0.05,
                     alpha: float = 0.01) -> Stage4Result:
    def run(labels, eps):
        states = (IDLE,) + tuple(labels)
        train = template_snapshots(seed, duration_s, labels, eps)
        test = template_snapshots(seed + 1, duration_s, labels, eps)
        model = stage4_train([train], alpha, states)
        return stage4_infer(test[0], model, test[1])

    return Stage4Result(run(TIME_INDEPENDENT, 0.0), run(TIME_DEPENDENT, noise))
