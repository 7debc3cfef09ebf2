import numpy as np
import pytest

from homeleak.core import IntervalKind, MetricReport
from homeleak.defense import (
    DegradationCurve,
    InjectionPolicy,
    Mimicry,
    Stage,
    defense_scenario,
    evaluate_defense,
    inject_spoof,
    inject_with_spans,
    is_degrading,
)
from homeleak.learners import ForestParams
from homeleak.simulate import catalog_by_identity, generate_device_trace, random_device_events

from conftest import make_trace

PLUG = catalog_by_identity()[next(i for i in catalog_by_identity() if str(i) == "TPLink/HS110Plug")]


def _plug_trace(seed=0, duration=600.0, n=4):
    events = random_device_events(PLUG, duration, n, np.random.default_rng(seed))
    return generate_device_trace(PLUG, events, duration, seed)


def test_uniform_noise_count():
    t = make_trace(np.arange(100) * 1.0)
    out = inject_spoof(t, InjectionPolicy(0.1, Mimicry.UNIFORM_NOISE, 3))
    assert len(out) == 110
    assert sum(r.spoofed for r in out.records) == 10
    assert all(np.diff([r.timestamp for r in out.records]) >= 0)


def test_burst_mimic_count():
    t = _plug_trace()
    out = inject_spoof(t, InjectionPolicy(0.1, Mimicry.BURST_MIMIC, 3))
    assert sum(r.spoofed for r in out.records) == int(0.1 * len(t))


def test_rate_zero_is_identity():
    t = _plug_trace()
    assert inject_spoof(t, InjectionPolicy(0.0, seed=5)) == t


def test_original_records_preserved():
    t = _plug_trace()
    out = inject_spoof(t, InjectionPolicy(0.3, seed=1))
    assert [r for r in out.records if not r.spoofed] == list(t.records)
    assert out.annotations == t.annotations
    assert out.meta == t.meta


def test_mimic_bursts_avoid_real_activity():
    t = _plug_trace(1, 900.0, 3)
    inj = inject_with_spans(t, InjectionPolicy(0.2, seed=2))
    acts = t.intervals(IntervalKind.DEVICE_ACTIVITY)
    assert inj.spans
    for start, end, action in inj.spans:
        assert action in PLUG.actions
        assert not any(a.overlaps(start, end) for a in acts)


def test_lower_rate_is_prefix():
    t = _plug_trace()
    lo = [r for r in inject_spoof(t, InjectionPolicy(0.1, seed=4)).records if r.spoofed]
    hi = [r for r in inject_spoof(t, InjectionPolicy(0.4, seed=4)).records if r.spoofed]
    assert set(lo) <= set(hi)


def test_injection_is_deterministic():
    t = _plug_trace()
    p = InjectionPolicy(0.25, seed=9)
    assert inject_spoof(t, p) == inject_spoof(t, p)


@pytest.mark.parametrize("rate", [-0.1, 0.96, 1.0])
def test_rate_validation(rate):
    with pytest.raises(ValueError):
        InjectionPolicy(rate)


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        inject_spoof(make_trace([]), InjectionPolicy(0.1))


def _report(f1):
    return MetricReport(f1, 1 - f1, f1, 1 - f1, f1, f1, f1)


def test_curve_csv_and_json():
    c = DegradationCurve(Stage.DETECTION, ((0.0, _report(0.9)), (0.5, _report(0.4))))
    lines = c.to_csv().splitlines()
    assert lines[0] == "rate,f1,precision,recall,accuracy"
    assert lines[1].startswith("0.0,0.9")
    assert DegradationCurve.from_json(c.to_json()) == c
    assert len(c.to_long_json()) == 8


def test_curve_validation():
    with pytest.raises(ValueError):
        DegradationCurve(Stage.DETECTION, ((0.1, _report(0.9)),))
    with pytest.raises(ValueError):
        DegradationCurve(Stage.DETECTION, ((0.0, _report(0.9)), (0.0, _report(0.8))))


def test_is_degrading():
    mk = lambda vals: DegradationCurve(Stage.DETECTION, tuple((i / 10, _report(v)) for i, v in enumerate(vals)))
    assert is_degrading(mk([0.9, 0.7, 0.72, 0.5]))
    assert not is_degrading(mk([0.9, 0.7, 0.8, 0.5]))
    assert not is_degrading(mk([0.5, 0.7]))


@pytest.fixture(scope="module")
def small_scenario():
    cat = [a for a in catalog_by_identity().values() if str(a.identity) in ("TPLink/HS110Plug", "August/SmartLock")]
    return defense_scenario(0, 900.0, 6, cat)


def test_baseline_point_matches_uninjected(small_scenario):
    a = evaluate_defense(small_scenario, Stage.DETECTION, [0.0, 0.5], 0)
    b = evaluate_defense(small_scenario, Stage.DETECTION, [0.0], 0, inject_train=False, inject_test=False)
    assert a.points[0] == b.points[0]
    assert a.f1()[1] < a.f1()[0]


def test_classification_curve_degrades(small_scenario):
    c = evaluate_defense(small_scenario, Stage.CLASSIFICATION, [0.0, 0.3, 0.6], 0, params=ForestParams(n_trees=30))
    assert c.rates == [0.0, 0.3, 0.6]
    assert c.f1()[-1] < c.f1()[0]


def test_rates_need_baseline(small_scenario):
    with pytest.raises(ValueError):
        evaluate_defense(small_scenario, Stage.DETECTION, [0.1], 0)
