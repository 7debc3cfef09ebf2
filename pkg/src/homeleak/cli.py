"""Command-line front end: ``homeleak simulate|train|attack|defend|eval``.

Every flag can also be set through an environment variable named
``HOMELEAK_<FLAG>`` (for example ``HOMELEAK_SEED=3``); an explicit flag wins.
Exit codes: 0 success, 2 usage error, 3 data error, 4 model error. Errors are
printed as one line: ``homeleak: error code=<n> kind=<kind>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    DeviceIdentity,
    IntervalKind,
    MetricReport,
    Trace,
    accuracy_score,
    binary_report,
    classification_report,
)
from .defense import Mimicry, Stage, defense_scenario, defense_scenario_from_script, evaluate_defense
from .features import recommend_window, ts_feature_matrix
from .learners import ForestParams, ModelError
from .pipeline import (
    DEFAULT_GRID_S,
    DEFAULT_INTERVAL_S,
    HUB_IDENTITY,
    ClassifierModel,
    DeploymentMap,
    DetectorModel,
    IdentifierModel,
    LearnerSpec,
    StratificationError,
    activity_labels_at,
    activity_record,
    build_snapshots,
    cascade_bound,
    decoded_spans,
    holdout_eval,
    label_segments,
    segment_record,
    segment_states,
    stage1_identify,
    stage1_train,
    stage2_detect,
    stage2_training_set,
    stage2_truth,
    stage3_classify,
    stage3_train,
    stage4_infer,
    stage4_train,
    truth_segments,
    write_jsonl,
)
from .learners import HmmModel
from .simulate import AWAY_LABEL, HOME_BACKGROUND, catalog_by_identity, generate_scenario, load_scenario
from .traceio import TraceFormatError, is_coordinator, read_capture, split_flows, write_capture

ENV_PREFIX = "HOMELEAK_"
DEPLOYMENT_FILE = "deployment.json"
STAGE_FILES = {1: "stage1.json", 2: "stage2.json", 3: "stage3.json", 4: "stage4.json"}
DEFAULT_RATES = tuple(round(0.1 * i, 1) for i in range(10))

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Parameters shared by the commands; defaults follow the library modules."""
    seed: int = 0
    window: Optional[float] = None      # None: duration/4 of each device type
    interval: float = DEFAULT_INTERVAL_S
    k: int = 5
    trees: int = 100
    alpha: float = 0.01
    rates: tuple[float, ...] = DEFAULT_RATES
    jobs: int = 1
    learner: str = "knn"
    grid: float = DEFAULT_GRID_S

    @property
    def forest(self) -> ForestParams:
        return ForestParams(n_trees=self.trees)

    def spec(self, kind: Optional[str] = None) -> LearnerSpec:
        return LearnerSpec(kind or self.learner, self.k, self.forest, self.jobs)


# --------------------------------------------------------------------------
# report helpers

def _metric_dict(m: Optional[MetricReport]) -> Optional[dict]:
    return None if m is None else m.to_dict()


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _write_report(out: Path, name: str, doc: dict, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / f"{name}.txt").write_text(text, encoding="utf-8")


def _save(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, separators=(",", ":"), sort_keys=True), encoding="utf-8")


def _load(model_dir: Path, stage: int) -> dict:
    p = Path(model_dir) / STAGE_FILES[stage]
    if not p.exists():
        raise ModelError(f"Stage-{stage} model missing: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelError(f"Stage-{stage} model unreadable: {p}: {e}") from None


# --------------------------------------------------------------------------
# simulate

def deployment_for(script) -> DeploymentMap:
    """Bit layout of a scenario: sensors and devices in placement order."""
    skip = set(HOME_BACKGROUND)
    sensors = tuple(d.flow_id for d in script.devices if d.role == "sensor" and d.name not in skip)
    devices = tuple(d.flow_id for d in script.devices if d.role == "device" and d.name not in skip)
    ctrl = [d.flow_id for d in script.devices if d.role == "controller"]
    return DeploymentMap(sensors, devices, ctrl[0] if ctrl else None)


def cmd_simulate(scenario: str, out: Path, cfg: RunConfig = RunConfig(), jsonl: bool = False) -> dict:
    script = load_scenario(scenario, cfg.seed)
    capture = generate_scenario(script, cfg.seed)
    out = Path(out)
    write_capture(capture, out, jsonl=jsonl)
    (out / DEPLOYMENT_FILE).write_text(json.dumps(deployment_for(script).to_json(), indent=2) + "\n",
                                       encoding="utf-8")
    meta = {"scenario": str(scenario), "seed": cfg.seed, **capture.meta, "flows": len(capture.traces)}
    text = "".join(f"{k}: {v}\n" for k, v in meta.items())
    _write_report(out, "simulate_report", meta, text)
    return meta


# --------------------------------------------------------------------------
# train

def _identity_window(identity: DeviceIdentity, cfg: RunConfig) -> float:
    if cfg.window is not None:
        return cfg.window
    arch = catalog_by_identity().get(identity)
    if arch is None or not arch.actions:
        raise ValueError(f"no activity duration known for {identity}; pass --window")
    return recommend_window(arch.activity_duration)


def _active_flows(capture) -> "dict[DeviceIdentity, list[Trace]]":
    """Non-hub flows with annotated activity, grouped by device identity."""
    out: dict = {}
    for t in split_flows(capture):
        if is_coordinator(t) or not t.intervals(IntervalKind.DEVICE_ACTIVITY):
            continue
        out.setdefault(t.meta.identity, []).append(t)
    return out


def _label_fn(t: Trace):
    ident = str(t.meta.identity)
    return lambda a: f"{ident}:{a.label}"


def _holdout_or_none(X, y, spec: LearnerSpec, seed: int) -> Optional[MetricReport]:
    keep = [i for i, v in enumerate(y) if list(y).count(v) >= 2]
    if len({y[i] for i in keep}) < 2:
        return None
    try:
        return holdout_eval(np.asarray(X)[keep], [y[i] for i in keep], 0.25, spec, seed)
    except StratificationError:
        return None


def _train_stage1(capture, cfg: RunConfig):
    model = stage1_train(split_flows(capture), cfg.interval, cfg.k, cfg.seed)
    return model.to_json(), {"interval_s": cfg.interval, "flows": len(capture.traces)}


def _train_stage2(capture, cfg: RunConfig):
    detectors, reports = {}, {}
    for identity, traces in _active_flows(capture).items():
        W = _identity_window(identity, cfg)
        X, y = stage2_training_set(traces, W)
        if len(set(y)) < 2:
            continue
        det = DetectorModel(cfg.spec().fit(X, y, cfg.seed), W)
        detectors[str(identity)] = det.to_json()
        rep = _holdout_or_none(X, y, cfg.spec(), cfg.seed)
        reports[str(identity)] = {"window_s": W, "holdout": _metric_dict(rep)}
    if not detectors:
        raise ValueError("no flow has both active and idle windows to train Stage-2")
    f1 = [r["holdout"]["f1"] for r in reports.values() if r["holdout"] and r["holdout"]["f1"] is not None]
    summary = {"learner": cfg.learner, "detectors": reports, "holdout_f1": float(np.mean(f1)) if f1 else None}
    return {"detectors": detectors}, summary


def _train_stage3(capture, cfg: RunConfig, model_dir: Path):
    stage2 = _load_detectors(model_dir)
    segs, none = [], []
    for identity, traces in _active_flows(capture).items():
        for t in traces:
            segs += truth_segments(t, _label_fn(t))
            det = stage2.get(str(identity))
            if det is None:
                continue
            detected = label_segments(segment_states(t, stage2_detect(t, det)), t, _label_fn(t))
            none += [s for s in detected if s.label == "none"]
    segs += none
    if not segs:
        raise ValueError("no activity segments to train Stage-3")
    clf = stage3_train(segs, cfg.seed, cfg.spec("rf"))
    X = clf.mask.apply(ts_feature_matrix(segs))
    rep = _holdout_or_none(X, [s.label for s in segs], cfg.spec("rf"), cfg.seed)
    summary = {"segments": len(segs), "none_segments": len(none), "classes": len({s.label for s in segs}),
               "features_kept": len(clf.mask.kept), "features_total": clf.mask.n_original,
               "holdout": _metric_dict(rep)}
    return clf.to_json(), summary


def _train_stage4(capture, cfg: RunConfig, capture_dir: Path):
    deployment = _read_deployment(capture_dir)
    segs = []
    for t in split_flows(capture):
        if t.flow_id in deployment.flows():
            segs += truth_segments(t)
    dep = _with_away(deployment, capture)
    snaps = build_snapshots(segs, cfg.grid, dep, capture.duration)
    truth = activity_labels_at([s.time_s for s in snaps], capture.annotations)
    model = stage4_train([(snaps, truth)], cfg.alpha)
    fit = stage4_infer(snaps, model, truth)
    doc = {"model": model.to_json(), "deployment": deployment.to_json(), "grid_s": cfg.grid}
    return doc, {"snapshots": len(snaps), "training_accuracy": fit.accuracy, "alpha": cfg.alpha}


def _read_deployment(capture_dir: Path) -> DeploymentMap:
    p = Path(capture_dir) / DEPLOYMENT_FILE
    if not p.exists():
        raise FileNotFoundError(f"{DEPLOYMENT_FILE} not found in {capture_dir}; Stage-4 needs the device layout")
    return DeploymentMap.from_json(json.loads(p.read_text(encoding="utf-8")))


def _with_away(dep: DeploymentMap, capture) -> DeploymentMap:
    away = tuple((a.start, a.end) for a in capture.annotations
                 if a.kind is IntervalKind.DEVICE_STATE and a.label == AWAY_LABEL)
    return DeploymentMap(dep.sensors, dep.devices, dep.controller, away)


def _load_detectors(model_dir: Path) -> dict[str, DetectorModel]:
    doc = _load(model_dir, 2)
    try:
        return {k: DetectorModel.from_json(v) for k, v in doc["detectors"].items()}
    except (KeyError, TypeError) as e:
        raise ModelError(f"Stage-2 model malformed: {e}") from None


def cmd_train(capture_dir: Path, out: Path, stages: Sequence[int] = (1, 2, 3, 4),
              cfg: RunConfig = RunConfig()) -> dict:
    """Fit the requested stages on a labeled capture and save one file per stage.

    Stage-3 reuses the Stage-2 detectors to collect ``none`` segments, so it
    needs a Stage-2 model in ``out`` (trained in the same call or earlier).
    """
    capture = read_capture(capture_dir)
    out = Path(out)
    summary = {"seed": cfg.seed}
    for stage in sorted(set(stages)):
        if stage == 1:
            doc, rep = _train_stage1(capture, cfg)
        elif stage == 2:
            doc, rep = _train_stage2(capture, cfg)
        elif stage == 3:
            doc, rep = _train_stage3(capture, cfg, out)
        elif stage == 4:
            doc, rep = _train_stage4(capture, cfg, capture_dir)
        else:
            raise UsageError(f"unknown stage {stage}")
        _save(out / STAGE_FILES[stage], doc)
        summary[f"stage{stage}"] = rep
    lines = []
    for s in sorted(set(stages)):
        rep = summary[f"stage{s}"]
        flat = {k: v for k, v in rep.items() if not isinstance(v, dict)}
        if isinstance(rep.get("holdout"), dict):
            flat["holdout_f1"] = rep["holdout"]["f1"]
        lines.append(f"stage{s}: " + " ".join(f"{k}={v}" for k, v in sorted(flat.items())) + "\n")
    _write_report(out, "train_report", summary, "".join(lines))
    return summary


# --------------------------------------------------------------------------
# attack

@dataclass
class AttackReport:
    stages: dict = field(default_factory=dict)
    accuracies: list = field(default_factory=list)

    @property
    def bound(self) -> float:
        return cascade_bound(self.accuracies)

    def to_json(self) -> dict:
        return {"stages": self.stages, "stage_accuracies": self.accuracies, "cascade_bound": self.bound}

    def to_text(self) -> str:
        lines = []
        for name, st in self.stages.items():
            m = st.get("metrics") or {}
            lines.append(f"{name}: accuracy={_fmt(st.get('accuracy'))} f1={_fmt(m.get('f1'))} "
                         f"precision={_fmt(m.get('precision'))} recall={_fmt(m.get('tpr'))}")
        sym = " x ".join(f"{a:.4f}" for a in self.accuracies)
        lines.append(f"cascade bound X*Y*Z*T = {sym} = {self.bound:.6f}")
        return "\n".join(lines) + "\n"


def cmd_attack(capture_dir: Path, model_dir: Path, out: Path, cfg: RunConfig = RunConfig()) -> dict:
    """Run the four stages in sequence and score each against the capture's labels."""
    model_dir = Path(model_dir)
    docs = {s: _load(model_dir, s) for s in (1, 2, 3, 4)}
    try:
        identifier = IdentifierModel.from_json(docs[1])
        detectors = _load_detectors(model_dir)
        classifier = ClassifierModel.from_json(docs[3])
        hmm = HmmModel.from_json(docs[4]["model"])
        deployment = DeploymentMap.from_json(docs[4]["deployment"])
        grid = float(docs[4].get("grid_s", DEFAULT_GRID_S))
    except (KeyError, TypeError) as e:
        raise ModelError(f"model directory {model_dir} is malformed: {e}") from None
    capture = read_capture(capture_dir)
    flows = split_flows(capture)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = AttackReport()

    # Stage-1
    ident = stage1_identify(flows, identifier, identifier.interval_s)
    scored = [t for t in flows if not is_coordinator(t) and t.meta.device_type != "unknown"]
    y1 = [str(t.meta.identity) for t in scored]
    p1 = [str(ident[t.flow_id]) for t in scored]
    hubs = [t.flow_id for t in flows if is_coordinator(t)]
    report.stages["stage1"] = {"accuracy": accuracy_score(y1, p1), "metrics": _metric_dict(classification_report(y1, p1)),
                               "hub_bypassed": all(ident[f] == HUB_IDENTITY for f in hubs)}
    (out / "identities.json").write_text(json.dumps({f: str(i) for f, i in ident.items()}, indent=2) + "\n",
                                         encoding="utf-8")

    # Stage-2
    series, y2, p2 = [], [], []
    segments, truth_labels = [], []
    for t in flows:
        det = detectors.get(str(ident[t.flow_id]))
        if det is None or is_coordinator(t):
            continue
        ts = stage2_detect(t, det)
        series.append(ts)
        y2 += stage2_truth(t, det.window_s, t.end_time)
        p2 += list(ts.bits)
        segs = segment_states(t, ts)
        segments += segs
        truth_labels += [s.label for s in label_segments(segs, t, _label_fn(t))]
    if not p2:
        raise ValueError("no flow was identified as a device with a Stage-2 detector")
    report.stages["stage2"] = {"accuracy": accuracy_score(y2, p2), "metrics": _metric_dict(binary_report(y2, p2)),
                               "windows": len(p2)}
    write_jsonl(out / "series.jsonl", [s.to_json() for s in series])

    # Stage-3
    classified = stage3_classify(segments, classifier)
    p3 = [s.label for s in classified]
    acc3 = accuracy_score(truth_labels, p3) if p3 else 1.0
    report.stages["stage3"] = {"accuracy": acc3, "segments": len(p3),
                               "metrics": _metric_dict(classification_report(truth_labels, p3)) if p3 else None}
    write_jsonl(out / "segments.jsonl", [segment_record(s) for s in classified])

    # Stage-4
    kept = [s for s in classified if s.flow_id in deployment.flows()]
    dep = _with_away(deployment, capture)
    snaps = build_snapshots(kept, grid, dep, capture.duration)
    times = [s.time_s for s in snaps]
    truth4 = activity_labels_at(times, capture.annotations)
    res = stage4_infer(snaps, hmm, truth4)
    report.stages["stage4"] = {"accuracy": res.accuracy, "metrics": _metric_dict(res.macro),
                               "snapshots": len(snaps)}
    write_jsonl(out / "snapshots.jsonl", [s.to_json() for s in snaps])
    write_jsonl(out / "activities.jsonl", [activity_record(a) for a in decoded_spans(times, res.labels, grid)])

    report.accuracies = [report.stages[f"stage{i}"]["accuracy"] for i in (1, 2, 3, 4)]
    doc = report.to_json()
    _write_report(out, "attack_report", doc, report.to_text())
    return doc


# --------------------------------------------------------------------------
# defend / eval

def cmd_defend(out: Path, cfg: RunConfig = RunConfig(), scenario: Optional[str] = None,
               stages: Sequence[str] = ("detection", "classification"), mimicry: str = "burst") -> dict:
    if scenario is None:
        sc = defense_scenario(cfg.seed)
    else:
        sc = defense_scenario_from_script(lambda s: load_scenario(scenario, s), cfg.seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    doc, lines = {}, []
    for name in stages:
        curve = evaluate_defense(sc, Stage(name), cfg.rates, cfg.seed, Mimicry(mimicry), k=cfg.k,
                                 params=cfg.forest, jobs=cfg.jobs)
        (out / f"defense_{name}.csv").write_text(curve.to_csv(), encoding="utf-8")
        (out / f"defense_{name}_long.json").write_text(json.dumps(curve.to_long_json(), indent=2) + "\n",
                                                       encoding="utf-8")
        doc[name] = curve.to_json()
        lines.append(f"{name}: " + " ".join(f"{r:g}:{_fmt(f)}" for r, f in zip(curve.rates, curve.f1())))
    _write_report(out, "defense_report", doc, "\n".join(lines) + "\n")
    return doc


def _read_labels(path: Path) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"label file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        try:
            return [str(r["label"]) for r in rows]
        except (KeyError, TypeError):
            raise ValueError(f"{p}: every JSONL row needs a 'label' field") from None
    return [line.strip() for line in text.splitlines() if line.strip()]


def cmd_eval(predictions: Path, truth: Path, out: Optional[Path] = None) -> dict:
    y_pred, y_true = _read_labels(predictions), _read_labels(truth)
    if len(y_pred) != len(y_true):
        raise ValueError(f"{len(y_pred)} predictions but {len(y_true)} truth labels")
    if not y_true:
        raise ValueError("no labels to evaluate")
    rep = classification_report(y_true, y_pred)
    doc = {"accuracy": accuracy_score(y_true, y_pred), "metrics": rep.to_dict(), "n": len(y_true)}
    if out is not None:
        _write_report(Path(out), "eval_report", doc, f"accuracy={doc['accuracy']:.4f}\n" + rep.to_text())
    return doc


# --------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def _rates(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"rates must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("rates list is empty")
    return vals


def _stages(text: str) -> tuple[int, ...]:
    if text == "all":
        return (1, 2, 3, 4)
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"stages must be 'all' or numbers 1-4, got {text!r}") from None
    if any(v not in STAGE_FILES for v in vals):
        raise argparse.ArgumentTypeError(f"stages must lie in 1-4, got {text!r}")
    return vals


def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    spec = {
        "seed": (int, 0, "root seed for all randomness"),
        "window": (float, None, "Stage-2 window in seconds (default: activity duration / 4 per device type)"),
        "interval": (float, DEFAULT_INTERVAL_S, "Stage-1 feature interval in seconds"),
        "k": (int, 5, "neighbours for kNN"),
        "trees": (int, 100, "trees per random forest"),
        "alpha": (float, 0.01, "HMM additive smoothing"),
        "rates": (_rates, ",".join(str(r) for r in DEFAULT_RATES), "comma-separated injection rates"),
        "jobs": (int, 1, "worker threads for forest fitting"),
    }
    for name in flags:
        typ, default, help_ = spec[name]
        env = _env(name)
        p.add_argument(f"--{name}", type=typ, default=env if env is not None else default,
                       help=f"{help_} (env {ENV_PREFIX}{name.upper()})")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="homeleak", description="Smart-home traffic side-channel toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a labeled capture from a scenario file")
    s.add_argument("scenario", help="scenario JSON path or bundled name (benchmark.json, walking.json, idle.json)")
    s.add_argument("--jsonl", action="store_true", help="write JSONL instead of line format")
    _common(s, "seed")

    t = sub.add_parser("train", help="fit attack models on a labeled capture")
    t.add_argument("capture", help="capture directory")
    t.add_argument("--stage", type=_stages, default=_stages(_env("stage", "all")), help="'all' or e.g. 1,2")
    t.add_argument("--learner", choices=("knn", "rf"), default=_env("learner", "knn"), help="Stage-2 learner")
    _common(t, "seed", "window", "interval", "k", "trees", "alpha", "jobs")

    a = sub.add_parser("attack", help="run all four stages on a capture")
    a.add_argument("capture", help="capture directory")
    a.add_argument("--models", required=_env("models") is None, default=_env("models"),
                   help="directory written by 'train'")
    _common(a, "seed")

    d = sub.add_parser("defend", help="measure attack quality against spoofed-traffic injection")
    d.add_argument("--scenario", default=_env("scenario"), help="scenario JSON (default: every catalog device)")
    d.add_argument("--stage", choices=("detection", "classification", "both"), default=_env("stage", "both"))
    d.add_argument("--mimicry", choices=[m.value for m in Mimicry], default=_env("mimicry", "burst"))
    _common(d, "seed", "rates", "k", "trees", "jobs")

    e = sub.add_parser("eval", help="score a prediction file against a truth file")
    e.add_argument("predictions")
    e.add_argument("truth")

    for q in (s, t, a, d, e):
        q.add_argument("--out", default=_env("out"), required=q in (s, t, a, d) and _env("out") is None,
                       help=f"output directory (env {ENV_PREFIX}OUT)")
    return p


def _config(ns) -> RunConfig:
    # argparse has already converted flag values and string defaults from the environment
    kw = {name: getattr(ns, name) for name in ("seed", "window", "interval", "k", "trees", "alpha", "jobs",
                                               "rates", "learner") if getattr(ns, name, None) is not None}
    return RunConfig(**kw)


def _dispatch(ns) -> str:
    cfg = _config(ns)
    if ns.command == "simulate":
        doc = cmd_simulate(ns.scenario, Path(ns.out), cfg, ns.jsonl)
        return "".join(f"{k}: {v}\n" for k, v in doc.items())
    if ns.command == "train":
        cmd_train(Path(ns.capture), Path(ns.out), ns.stage, cfg)
        return (Path(ns.out) / "train_report.txt").read_text(encoding="utf-8")
    if ns.command == "attack":
        cmd_attack(Path(ns.capture), Path(ns.models), Path(ns.out), cfg)
        return (Path(ns.out) / "attack_report.txt").read_text(encoding="utf-8")
    if ns.command == "defend":
        stages = ("detection", "classification") if ns.stage == "both" else (ns.stage,)
        cmd_defend(Path(ns.out), cfg, ns.scenario, stages, ns.mimicry)
        return (Path(ns.out) / "defense_report.txt").read_text(encoding="utf-8")
    doc = cmd_eval(Path(ns.predictions), Path(ns.truth), Path(ns.out) if ns.out else None)
    return json.dumps(doc, sort_keys=True) + "\n"


def _fail(code: int, kind: str, message: str) -> int:
    one_line = " ".join(str(message).split())
    print(f"homeleak: error code={code} kind={kind}: {one_line}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        text = _dispatch(ns)
    except UsageError as e:
        return _fail(EXIT_USAGE, "usage", e)
    except ModelError as e:
        return _fail(EXIT_MODEL, "model", e)
    except (FileNotFoundError, TraceFormatError, ValueError, KeyError, OSError) as e:
        return _fail(EXIT_DATA, "data", e.args[0] if e.args else e)
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
