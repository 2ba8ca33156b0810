"""Batch trial evaluation and report rendering.

A suite is a list of scripted trials, each naming a route (by its goal
landmark id), a grounding method, and the utterance script to feed the
dialogue loop.  run_suite executes every trial with run_trial and reduces
the per-trial metrics into one report per method, then adds session-level
measurements that do not depend on the grounding method: intent
classification accuracy on clean and noise-corrupted transcripts,
description correctness at a fixed set of camera poses, question answering
against pinned expected answers, and whether speed and pause commands take
effect mid-run.

Suite files are JSON.  The canonical shape is an object::

    {"scene": "...", "thresholds": {...}, "qa_probes": [...], "trials": [...]}

where each trial is ``{"route": ..., "method": ..., "script": [...]}``.  A
bare list of trials is also accepted; it carries no scene name, thresholds,
or probes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .grounding import recognizer_for
from .nlu import (
    Intent,
    NluModel,
    corrupt_transcript,
    fit,
    shipped_confusion,
    shipped_corpus,
    shipped_eval_corpus,
    understand,
)
from .perception import DescriptionConfig, describe, answer_question, simulate_detections
from .planner import GoalManager
from .sim import SimConfig, TrialDeps, run_trial
from .world import ParseError, Pose2D, Scene, visible_objects

GROUNDING_METHODS = ("lexicon", "detector")

# Noise rate for the corrupted-transcript accuracy measurement.
NOISE_RATE = 0.3

# Offsets that decorrelate per-probe detection seeds from the trial seeds.
_PROBE_SEED_STRIDE = 7919

# Timing of the scripted speed and pause commands, in seconds.
_ADJUST_PAUSE_AT = 3.0
_ADJUST_RESUME_AT = 5.0
_ADJUST_FASTER_AT = 6.0
_ADJUST_SLOWER_AT = 8.0


# --- report types -----------------------------------------------------------


def _check_rate(name: str, value: Optional[float]) -> None:
    if value is not None and not 0.0 <= value <= 100.0:
        raise ValueError(f"{name} {value} outside [0, 100]")


@dataclass(frozen=True)
class MethodReport:
    """Aggregated trial outcomes for one grounding method.

    Rates are percentages.  Fields are None when no trial contributed, e.g.
    nav_rate_given_lr when no trial recognized its landmark.
    """

    method: str
    trials: int
    lr_rate: Optional[float]
    nav_rate: Optional[float]
    nav_rate_given_lr: Optional[float]
    mean_rounds: Optional[float]

    def __post_init__(self):
        if self.trials < 0:
            raise ValueError("trial count must be >= 0")
        for name in ("lr_rate", "nav_rate", "nav_rate_given_lr"):
            _check_rate(name, getattr(self, name))
        if self.mean_rounds is not None and self.mean_rounds < 0:
            raise ValueError("mean_rounds must be >= 0")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "trials": self.trials,
            "lr_rate": self.lr_rate,
            "nav_rate": self.nav_rate,
            "nav_rate_given_lr": self.nav_rate_given_lr,
            "mean_rounds": self.mean_rounds,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "MethodReport":
        return MethodReport(
            method=data["method"],
            trials=data["trials"],
            lr_rate=data["lr_rate"],
            nav_rate=data["nav_rate"],
            nav_rate_given_lr=data["nav_rate_given_lr"],
            mean_rounds=data["mean_rounds"],
        )


@dataclass(frozen=True)
class SuiteReport:
    """One evaluation run: per-method trial rates plus session measurements."""

    methods: tuple[MethodReport, ...]
    nlu_clean: Optional[float] = None
    nlu_noisy: Optional[float] = None
    envdes_full: Optional[float] = None
    envdes_partial: Optional[float] = None
    qa_accuracy: Optional[float] = None
    navadj_success: Optional[float] = None

    def __post_init__(self):
        for name in (
            "nlu_clean",
            "nlu_noisy",
            "envdes_full",
            "envdes_partial",
            "qa_accuracy",
            "navadj_success",
        ):
            _check_rate(name, getattr(self, name))

    def method_report(self, method: str) -> MethodReport:
        for report in self.methods:
            if report.method == method:
                return report
        raise KeyError(f"no report for method {method!r}")

    def to_dict(self) -> dict:
        return {
            "methods": [m.to_dict() for m in self.methods],
            "nlu_clean": self.nlu_clean,
            "nlu_noisy": self.nlu_noisy,
            "envdes_full": self.envdes_full,
            "envdes_partial": self.envdes_partial,
            "qa_accuracy": self.qa_accuracy,
            "navadj_success": self.navadj_success,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "SuiteReport":
        return SuiteReport(
            methods=tuple(MethodReport.from_dict(m) for m in data["methods"]),
            nlu_clean=data["nlu_clean"],
            nlu_noisy=data["nlu_noisy"],
            envdes_full=data["envdes_full"],
            envdes_partial=data["envdes_partial"],
            qa_accuracy=data["qa_accuracy"],
            navadj_success=data["navadj_success"],
        )


# --- suite files ------------------------------------------------------------


@dataclass(frozen=True)
class SuiteTrial:
    route: str
    method: str
    script: tuple

    def __post_init__(self):
        if self.method not in GROUNDING_METHODS:
            raise ValueError(f"unknown grounding method {self.method!r}")
        if not self.script:
            raise ValueError("trial script is empty")


@dataclass(frozen=True)
class QaProbe:
    """One pinned question: asked at a landmark pose or a literal pose."""

    question: str
    expect: str
    landmark: Optional[str] = None
    pose: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        if (self.landmark is None) == (self.pose is None):
            raise ValueError("probe needs exactly one of landmark or pose")

    def resolve(self, scene: Scene) -> Pose2D:
        if self.pose is not None:
            return Pose2D(*self.pose)
        for lm in scene.landmarks:
            if lm.id == self.landmark:
                return lm.pose
        raise ValueError(f"probe references unknown landmark {self.landmark!r}")


@dataclass(frozen=True)
class Suite:
    trials: tuple[SuiteTrial, ...]
    scene: Optional[str] = None
    thresholds: Mapping = field(default_factory=dict)
    qa_probes: tuple[QaProbe, ...] = ()


def _coerce_trial(raw) -> SuiteTrial:
    if isinstance(raw, SuiteTrial):
        return raw
    if not isinstance(raw, Mapping):
        raise ParseError(f"trial must be an object, got {type(raw).__name__}")
    extra = set(raw) - {"route", "method", "script"}
    if extra:
        raise ParseError(f"unknown trial keys {sorted(extra)}")
    try:
        return SuiteTrial(
            route=raw["route"], method=raw["method"], script=tuple(raw["script"])
        )
    except KeyError as e:
        raise ParseError(f"trial is missing key {e.args[0]!r}") from None
    except ValueError as e:
        raise ParseError(str(e)) from None


def _coerce_probe(raw) -> QaProbe:
    if not isinstance(raw, Mapping):
        raise ParseError("qa probe must be an object")
    try:
        return QaProbe(
            question=raw["question"],
            expect=raw["expect"],
            landmark=raw.get("landmark"),
            pose=tuple(raw["pose"]) if "pose" in raw else None,
        )
    except KeyError as e:
        raise ParseError(f"qa probe is missing key {e.args[0]!r}") from None
    except ValueError as e:
        raise ParseError(str(e)) from None


def suite_from_data(data) -> Suite:
    """Build a Suite from decoded JSON: either a bare trial list or an object."""
    if isinstance(data, list):
        return Suite(trials=tuple(_coerce_trial(t) for t in data))
    if not isinstance(data, Mapping):
        raise ParseError("suite must be a JSON list or object")
    extra = set(data) - {"scene", "thresholds", "qa_probes", "trials"}
    if extra:
        raise ParseError(f"unknown suite keys {sorted(extra)}")
    if "trials" not in data or not isinstance(data["trials"], list):
        raise ParseError("suite object needs a \"trials\" list")
    thresholds = data.get("thresholds", {})
    if not isinstance(thresholds, Mapping):
        raise ParseError("thresholds must be an object")
    return Suite(
        trials=tuple(_coerce_trial(t) for t in data["trials"]),
        scene=data.get("scene"),
        thresholds=thresholds,
        qa_probes=tuple(_coerce_probe(p) for p in data.get("qa_probes", [])),
    )


def load_suite(path: Union[str, Path]) -> Suite:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read suite file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"suite file {path} is not valid JSON: {e}") from e
    return suite_from_data(data)


def shipped_suite() -> Suite:
    """The evaluation suite bundled with the package."""
    from importlib import resources

    ref = resources.files("wayfinder.data").joinpath("suite.json")
    with ref.open("r", encoding="utf-8") as fh:
        return suite_from_data(json.load(fh))


# --- session measurements ---------------------------------------------------


def intent_accuracy(
    model: NluModel,
    items: Sequence[Mapping],
    noise_rate: Optional[float] = None,
    confusion: Optional[Mapping[str, Sequence[str]]] = None,
) -> float:
    """Exact intent-set accuracy over labelled utterances, as a percentage.

    With a noise_rate, each transcript is corrupted with its index as the
    seed before classification, so the measurement is reproducible.
    """
    if not items:
        raise ValueError("no labelled utterances")
    table = confusion if confusion is not None else shipped_confusion()
    hits = 0
    for idx, item in enumerate(items):
        text = item["text"]
        if noise_rate is not None:
            text = corrupt_transcript(text, table, noise_rate, seed=idx)
        predicted = {intent for intent, _ in understand(model, text).intents}
        if predicted == {Intent(name) for name in item["intents"]}:
            hits += 1
    return 100.0 * hits / len(items)


def _parse_description(text: str) -> dict[str, int]:
    """Invert the description formatter into {class: count}."""
    counts: dict[str, int] = {}
    for part in re.split(r", and |, | and ", text):
        m = re.fullmatch(r"(\d+) (.+)", part)
        if m is None:
            return counts  # the empty-scene sentence has no countable parts
        count = int(m.group(1))
        name = m.group(2)
        if count > 1 and name.endswith("s"):
            name = name[:-1]
        counts[name] = count
    return counts


def description_rates(scene: Scene, cfg: SimConfig) -> tuple[float, float]:
    """(fully correct %, partly correct %) over the scene's standard viewpoints.

    Viewpoints are the route starts and the landmark poses.  A description is
    fully correct when every stated class-count pair matches the ground-truth
    visible set exactly and as many classes are stated as the formatter could
    have stated; partly correct when at least one stated class is really in
    view; otherwise wrong (dropped or hallucinated content).
    """
    poses = [route.start for route in scene.routes]
    poses += [lm.pose for lm in scene.landmarks]
    if not poses:
        raise ValueError("scene has no viewpoints to describe")
    max_classes = DescriptionConfig().max_classes
    full = partial = 0
    for i, pose in enumerate(poses):
        visible = visible_objects(scene, pose, cfg.camera_fov, cfg.camera_range)
        truth: dict[str, int] = {}
        for obj in visible:
            truth[obj.class_name] = truth.get(obj.class_name, 0) + 1
        dets = simulate_detections(
            visible,
            pose,
            seed=cfg.seed * 100003 + _PROBE_SEED_STRIDE * i,
            fov=cfg.camera_fov,
        )
        stated = _parse_description(describe(dets))
        exact = all(truth.get(name) == count for name, count in stated.items())
        if exact and len(stated) == min(max_classes, len(truth)):
            full += 1
        elif any(name in truth for name in stated):
            partial += 1
    return 100.0 * full / len(poses), 100.0 * partial / len(poses)


def qa_accuracy(
    scene: Scene, cfg: SimConfig, probes: Sequence[QaProbe]
) -> Optional[float]:
    """Fraction of pinned questions answered exactly, as a percentage."""
    if not probes:
        return None
    hits = 0
    for probe in probes:
        pose = probe.resolve(scene)
        visible = visible_objects(scene, pose, cfg.camera_fov, cfg.camera_range)
        if answer_question(probe.question, visible, pose) == probe.expect:
            hits += 1
    return 100.0 * hits / len(probes)


def adjustment_success(scene: Scene, cfg: SimConfig, deps: TrialDeps) -> float:
    """Percentage of scripted speed and pause commands that visibly took effect.

    Runs one trial on the first route, pausing, resuming, speeding up, and
    slowing down at fixed times, then audits the command log: zero velocity
    while paused, motion after resuming, commands above the default ceiling
    after "faster", and back under it after "slower".
    """
    route = scene.routes[0]
    landmark = next(lm for lm in scene.landmarks if lm.id == route.goal_landmark)
    script = [
        f"take me to the {landmark.canonical_phrases[0]}",
        "yes",
        {"text": "pause", "at": _ADJUST_PAUSE_AT},
        {"text": "resume", "at": _ADJUST_RESUME_AT},
        {"text": "faster", "at": _ADJUST_FASTER_AT},
        {"text": "slower", "at": _ADJUST_SLOWER_AT},
    ]
    rows: list[dict] = []
    run_trial(scene, route, script, cfg, deps, step_log=rows)

    def speeds(lo: float, hi: float) -> list[float]:
        return [row["cmd"][0] for row in rows if lo < row["t"] <= hi]

    # Cruise ceiling before any speed command was given.
    default_limit = GoalManager(v_ceiling=deps.dwa.v_max).v_limit

    eps = 1e-9
    paused = speeds(_ADJUST_PAUSE_AT + cfg.dt, _ADJUST_RESUME_AT)
    resumed = speeds(_ADJUST_RESUME_AT + cfg.dt, _ADJUST_FASTER_AT)
    fast = speeds(_ADJUST_FASTER_AT + cfg.dt, _ADJUST_SLOWER_AT)
    slow = [row["cmd"][0] for row in rows if row["t"] > _ADJUST_SLOWER_AT + cfg.dt]
    checks = [
        bool(paused) and max(paused) == 0.0,
        bool(resumed) and max(resumed) > 0.0,
        bool(fast) and max(fast) > default_limit + eps,
        bool(slow) and max(slow) <= default_limit + eps,
    ]
    return 100.0 * sum(checks) / len(checks)


# --- suite execution --------------------------------------------------------


def _aggregate(method: str, metrics: Sequence) -> MethodReport:
    n = len(metrics)
    if n == 0:
        return MethodReport(method, 0, None, None, None, None)
    lr = sum(1 for m in metrics if m.lr_success)
    nav = sum(1 for m in metrics if m.nav_success)
    nav_given_lr = sum(1 for m in metrics if m.lr_success and m.nav_success)
    return MethodReport(
        method=method,
        trials=n,
        lr_rate=100.0 * lr / n,
        nav_rate=100.0 * nav / n,
        nav_rate_given_lr=None if lr == 0 else 100.0 * nav_given_lr / lr,
        mean_rounds=sum(m.dialogue_rounds for m in metrics) / n,
    )


def run_suite(
    scene: Scene,
    scripts: Sequence,
    methods: Sequence[str] = GROUNDING_METHODS,
    cfg: SimConfig = SimConfig(),
    *,
    qa_probes: Sequence[QaProbe] = (),
    model: Optional[NluModel] = None,
) -> SuiteReport:
    """Run every scripted trial for the requested methods and aggregate.

    scripts may hold SuiteTrial instances or raw trial dictionaries.  Each
    requested method must have trials covering every route in the scene.
    An empty method list yields an empty report without running anything.
    """
    methods = tuple(methods)
    if not methods:
        return SuiteReport(methods=())
    for method in methods:
        if method not in GROUNDING_METHODS:
            raise ValueError(f"unknown grounding method {method!r}")

    trials = [_coerce_trial(t) for t in scripts]
    route_by_goal = {route.goal_landmark: route for route in scene.routes}
    for trial in trials:
        if trial.route not in route_by_goal:
            raise ValueError(f"trial references unknown route {trial.route!r}")
    for method in methods:
        covered = {t.route for t in trials if t.method == method}
        missing = set(route_by_goal) - covered
        if missing:
            raise ValueError(
                f"method {method!r} has no script for routes {sorted(missing)}"
            )

    if model is None:
        model = fit(shipped_corpus())

    reports = []
    for method in methods:
        deps = TrialDeps(
            nlu_model=model, recognizer=recognizer_for(method, scene.landmarks)
        )
        collected = []
        for trial in trials:
            if trial.method != method:
                continue
            metrics, _ = run_trial(
                scene, route_by_goal[trial.route], list(trial.script), cfg, deps
            )
            collected.append(metrics)
        reports.append(_aggregate(method, collected))

    eval_items = shipped_eval_corpus()
    lexicon_deps = TrialDeps(
        nlu_model=model, recognizer=recognizer_for("lexicon", scene.landmarks)
    )
    full, partial = description_rates(scene, cfg)
    return SuiteReport(
        methods=tuple(reports),
        nlu_clean=intent_accuracy(model, eval_items),
        nlu_noisy=intent_accuracy(model, eval_items, noise_rate=NOISE_RATE),
        envdes_full=full,
        envdes_partial=partial,
        qa_accuracy=qa_accuracy(scene, cfg, qa_probes),
        navadj_success=adjustment_success(scene, cfg, lexicon_deps),
    )


# --- thresholds -------------------------------------------------------------

_METHOD_METRICS = ("lr_rate", "nav_rate", "nav_rate_given_lr", "mean_rounds")


def _check_bound(label: str, value: Optional[float], bound: Mapping) -> list[str]:
    unknown = set(bound) - {"min", "max"}
    if unknown:
        raise ValueError(f"threshold {label} has unknown keys {sorted(unknown)}")
    if value is None:
        return [f"{label}: no data"]
    failures = []
    if "min" in bound and value < bound["min"]:
        failures.append(f"{label}: {value:g} < required minimum {bound['min']:g}")
    if "max" in bound and value > bound["max"]:
        failures.append(f"{label}: {value:g} > allowed maximum {bound['max']:g}")
    return failures


def check_thresholds(report: SuiteReport, thresholds: Mapping) -> list[str]:
    """Return one message per violated threshold; an empty list means pass.

    thresholds maps method names to {metric: {"min"/"max": value}} plus the
    optional cross-method key "mean_rounds_gap", bounding mean_rounds of
    detector minus lexicon.
    """
    failures: list[str] = []
    for key, spec in thresholds.items():
        if key == "mean_rounds_gap":
            try:
                lex = report.method_report("lexicon").mean_rounds
                det = report.method_report("detector").mean_rounds
            except KeyError:
                failures.append("mean_rounds_gap: no data")
                continue
            gap = None if lex is None or det is None else det - lex
            failures += _check_bound("mean_rounds_gap", gap, spec)
            continue
        if key not in GROUNDING_METHODS:
            raise ValueError(f"threshold references unknown method {key!r}")
        try:
            method_report = report.method_report(key)
        except KeyError:
            failures.append(f"{key}: no data")
            continue
        for metric, bound in spec.items():
            if metric not in _METHOD_METRICS:
                raise ValueError(f"threshold references unknown metric {metric!r}")
            failures += _check_bound(
                f"{key} {metric}", getattr(method_report, metric), bound
            )
    return failures


# --- rendering --------------------------------------------------------------


def _cell(value: Optional[float], decimals: int) -> str:
    return "n/a" if value is None else f"{value:.{decimals}f}"


def render_report(report: SuiteReport, format: str = "table") -> str:
    """Render a report as an aligned text table or machine-diffable JSON."""
    if format in ("json", "JSON"):
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format not in ("table", "text-table"):
        raise ValueError(f"unknown report format {format!r}")

    widths = (10, 9, 9, 9, 11)
    lines = []
    group = "".join(
        [
            "".ljust(widths[0]),
            "LR".rjust(widths[1]),
            "".rjust(widths[2]),
            "Navigation".rjust(widths[3] + widths[4]),
        ]
    )
    head = "".join(
        [
            "method".ljust(widths[0]),
            "Overall".rjust(widths[1]),
            "# rounds".rjust(widths[2]),
            "Overall".rjust(widths[3]),
            "Correct-LR".rjust(widths[4]),
        ]
    )
    lines.append(group)
    lines.append(head)
    for m in report.methods:
        lines.append(
            "".join(
                [
                    m.method.ljust(widths[0]),
                    _cell(m.lr_rate, 1).rjust(widths[1]),
                    _cell(m.mean_rounds, 2).rjust(widths[2]),
                    _cell(m.nav_rate, 1).rjust(widths[3]),
                    _cell(m.nav_rate_given_lr, 1).rjust(widths[4]),
                ]
            )
        )
    lines.append("")
    label_width = 30
    session = [
        ("intent accuracy, clean", report.nlu_clean),
        ("intent accuracy, noisy", report.nlu_noisy),
        ("descriptions fully correct", report.envdes_full),
        ("descriptions partly correct", report.envdes_partial),
        ("question answering", report.qa_accuracy),
        ("speed and pause commands", report.navadj_success),
    ]
    for label, value in session:
        lines.append(f"{label.ljust(label_width)}{_cell(value, 1).rjust(6)}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> SuiteReport:
    """Invert the JSON rendering."""
    return SuiteReport.from_dict(json.loads(text))
