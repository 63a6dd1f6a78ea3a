"""
Synthetic benchmark suites and the evaluation harness.

A scenario is a sequence of logical UI states, some optional, each reached
by an action. The generator renders passing training and test traces from
it, plus failing traces of two kinds: product bugs (an essential state
replaced by a wrong one after the correct action) and agent issues (an
off-script action followed by detour states). Every test trace carries a
simulated agent self-report so the validator can be compared with the
agent's own assessment.
"""

import logging
import random
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .equivalence import EquivalenceClassifier
from .errors import ConfigError
from .graph_learn import learn_model
from .judge import MockJudge, SemanticJudge
from .trace_model import (ActionRecord, Trace, TraceRole, load_trace, observation_from_file,
                          save_trace)
from .utils import PathLike, read_json, write_stable_json
from .validation import MatchOptions, RootCauseKind, ValidationResult, validate_trace
from .visualizer import FrameRenderer

logger = logging.getLogger(__name__)

Params = Tuple[Tuple[str, str], ...]
Action = Tuple[str, Params]

PASSING = "passing"
FALSE_SUCCESS = "false_success"
AGENT_ISSUE = "agent_issue"
PRODUCT_BUG = "product_bug"
MISSED_BUG = "missed_bug"
CATEGORIES = (PASSING, FALSE_SUCCESS, AGENT_ISSUE, PRODUCT_BUG, MISSED_BUG)

REPORTED_SUCCESS = "success"
REPORTED_FAILURE = "failure"

# cosmetic variants per state: 0 is the clean frame
JITTER_LEVELS = 4

OFF_SCRIPT_ACTIONS: Tuple[Action, ...] = (
    ("click", (("target", "settings"),)),
    ("click", (("target", "extensions"),)),
    ("scroll", (("direction", "down"),)),
)
DETOUR_STATES = ("detour_settings", "detour_panel")
DETOUR_EXIT: Action = ("key", (("keys", "escape"),))


def _signature(action: Action) -> str:
    kind, params = action
    return ActionRecord(kind, params, 0, 1).signature


@dataclass(frozen=True)
class ScenarioStep:
    """A logical UI state and the action that leads into it."""
    name: str
    action: str = "none"
    params: Params = ()
    optional: bool = False

    @property
    def action_tuple(self) -> Action:
        return self.action, tuple(sorted(self.params))

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "action": self.action, "params": dict(self.params),
                "optional": self.optional}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioStep":
        if not isinstance(data, Mapping) or not isinstance(data.get("name"), str):
            raise ConfigError(f"Scenario step needs a 'name' string: {data!r}")
        params = data.get("params") or {}
        if not isinstance(params, Mapping):
            raise ConfigError(f"Scenario step '{data['name']}': 'params' must be an object")
        return cls(
            name=data["name"],
            action=str(data.get("action", "none")),
            params=tuple(sorted((str(k), str(v)) for k, v in params.items())),
            optional=bool(data.get("optional", False)),
        )


# open the editor and search across files; the loading screen depends on timing
DEFAULT_SCENARIO: Tuple[ScenarioStep, ...] = (
    ScenarioStep("start_menu"),
    ScenarioStep("launch", "type", (("text", "VS Code"),)),
    ScenarioStep("loading", "key", (("keys", "enter"),), optional=True),
    ScenarioStep("main_window", "wait", (("seconds", "2"),)),
    ScenarioStep("search_dialog", "key", (("keys", "ctrl+shift+f"),)),
    ScenarioStep("results", "type", (("text", "needle"),)),
)


@dataclass(frozen=True)
class BenchmarkSpec:
    """
    Benchmark configuration.

    ``false_success`` and ``missed_bug`` do not add traces: they flip the
    simulated self-report of that many failing (respectively passing) test
    traces.
    """
    n_training: int = 3
    passing: int = 11
    false_success: int = 1
    agent_issue: int = 3
    product_bug: int = 11
    missed_bug: int = 1
    seed: int = 42
    coverage_threshold: float = 100.0
    scenario: Tuple[ScenarioStep, ...] = DEFAULT_SCENARIO

    COUNT_FIELDS = ("n_training", "passing", "false_success", "agent_issue",
                    "product_bug", "missed_bug")

    def __post_init__(self) -> None:
        for name in self.COUNT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
        if self.n_training < 2:
            raise ConfigError(f"n_training must be at least 2, got {self.n_training}")
        if self.false_success > self.agent_issue + self.product_bug:
            raise ConfigError("false_success cannot exceed the number of failing traces")
        if self.missed_bug > self.passing:
            raise ConfigError("missed_bug cannot exceed the number of passing traces")
        if not 0.0 <= self.coverage_threshold <= 100.0:
            raise ConfigError(f"coverage_threshold must be in [0, 100], got {self.coverage_threshold}")
        self._check_scenario()

    def _check_scenario(self) -> None:
        steps = self.scenario
        if len(steps) < 2:
            raise ConfigError("Scenario needs at least two steps")
        if steps[0].optional or steps[-1].optional:
            raise ConfigError("The first and last scenario steps cannot be optional")
        names = [s.name for s in steps]
        if len(set(names)) != len(names):
            raise ConfigError(f"Scenario step names must be unique: {names}")
        reserved = set(DETOUR_STATES) | {f"broken_{n}" for n in names}
        for name in names:
            if not name or "#" in name or name in reserved:
                raise ConfigError(f"Invalid scenario step name {name!r}")
        scripted = {_signature(s.action_tuple) for s in steps[1:]}
        clash = scripted & {_signature(a) for a in OFF_SCRIPT_ACTIONS}
        if clash:
            raise ConfigError(f"Scenario actions collide with off-script actions: {sorted(clash)}")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {name: getattr(self, name) for name in self.COUNT_FIELDS}
        data["seed"] = self.seed
        data["coverage_threshold"] = self.coverage_threshold
        data["scenario"] = [s.to_dict() for s in self.scenario]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BenchmarkSpec":
        """Build from a mapping; missing keys keep their defaults."""
        if not isinstance(data, Mapping):
            raise ConfigError("Benchmark spec must be a JSON object")
        known = set(cls.COUNT_FIELDS) | {"seed", "coverage_threshold", "scenario"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown benchmark spec keys: {sorted(unknown)}")
        kwargs: Dict[str, Any] = {k: v for k, v in data.items() if k != "scenario"}
        if "coverage_threshold" in kwargs:
            try:
                kwargs["coverage_threshold"] = float(kwargs["coverage_threshold"])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"coverage_threshold must be a number: {e}") from e
        if "scenario" in data:
            if not isinstance(data["scenario"], list):
                raise ConfigError("'scenario' must be a list of steps")
            kwargs["scenario"] = tuple(ScenarioStep.from_dict(s) for s in data["scenario"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: PathLike) -> "BenchmarkSpec":
        try:
            data = read_json(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"Cannot read benchmark spec {path}: {e}") from e
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Trace generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """What to draw for one state observation."""
    name: str
    palette: int
    jitter: int = 0

    @property
    def label(self) -> str:
        return f"{self.name}#j{self.jitter}" if self.jitter else self.name


def write_trace(directory: PathLike, trace_id: str, frames: Sequence[Frame],
                actions: Sequence[Action], role: TraceRole = TraceRole.TRAINING,
                metadata: Optional[Mapping[str, str]] = None,
                renderer: Optional[FrameRenderer] = None) -> Trace:
    """
    Render frames into ``directory`` and write the trace manifest next to them.

    Returns:
        The written trace, with digests of the rendered PNGs
    """
    renderer = renderer or FrameRenderer()
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    states = []
    for i, frame in enumerate(frames):
        path = out / f"{i:03d}.png"
        renderer.save(renderer.render(frame.name, frame.palette, frame.jitter), path)
        states.append(observation_from_file(i, path, frame.label))
    records = tuple(ActionRecord(kind, tuple(sorted(params)), i, i + 1)
                    for i, (kind, params) in enumerate(actions))
    trace = Trace(id=trace_id, states=tuple(states), actions=records, role=role,
                  metadata=tuple(sorted((metadata or {}).items())))
    save_trace(trace, out)
    return trace


def realize_scenario(scenario: Sequence[ScenarioStep],
                     include: Callable[[ScenarioStep], bool]
                     ) -> List[Tuple[int, ScenarioStep, Optional[Action]]]:
    """
    Pick the steps of one run: (scenario position, step, action into it).

    A skipped optional step hands its action to the next included step, so
    the action taken from a state does not depend on timing.
    """
    path: List[Tuple[int, ScenarioStep, Optional[Action]]] = []
    pending: Optional[Action] = None
    for pos, step in enumerate(scenario):
        if step.optional and not include(step):
            if pending is None:
                pending = step.action_tuple
            continue
        action = pending or step.action_tuple
        pending = None
        path.append((pos, step, action if path else None))
    return path


@dataclass(frozen=True)
class GeneratedTrace:
    trace_id: str
    path: Path
    category: str
    self_report: str
    overlay: Optional[str] = None

    @property
    def expected_root_cause(self) -> Optional[RootCauseKind]:
        if self.category == PRODUCT_BUG:
            return RootCauseKind.PRODUCT_BUG
        if self.category == AGENT_ISSUE:
            return RootCauseKind.AGENT_ISSUE
        return None


@dataclass(frozen=True)
class SyntheticSuite:
    root: Path
    training: Tuple[Path, ...]
    tests: Tuple[GeneratedTrace, ...]


class SuiteGenerator:
    """Seeded generator; one instance produces one suite."""

    def __init__(self, spec: BenchmarkSpec, renderer: Optional[FrameRenderer] = None):
        self.spec = spec
        self.renderer = renderer or FrameRenderer()
        self.rng = random.Random(spec.seed)
        self.n = len(spec.scenario)

    def _coin(self, step: ScenarioStep) -> bool:
        return self.rng.random() < 0.5

    def _frames(self, path: Sequence[Tuple[int, ScenarioStep, Optional[Action]]]
                ) -> Tuple[List[Frame], List[Action]]:
        frames = [Frame(step.name, pos, self.rng.randrange(JITTER_LEVELS)) for pos, step, _ in path]
        actions = [a for _, _, a in path[1:] if a is not None]
        return frames, actions

    def training_trace(self, k: int) -> Tuple[List[Frame], List[Action]]:
        # trace 0 shows every optional state and trace 1 none, so none of them dominates
        include: Callable[[ScenarioStep], bool] = self._coin
        if k < 2:
            include = self._always if k == 0 else self._never
        return self._frames(realize_scenario(self.spec.scenario, include))

    @staticmethod
    def _always(step: ScenarioStep) -> bool:
        return True

    @staticmethod
    def _never(step: ScenarioStep) -> bool:
        return False

    def passing_trace(self) -> Tuple[List[Frame], List[Action], Dict[str, str]]:
        frames, actions = self._frames(realize_scenario(self.spec.scenario, self._coin))
        return frames, actions, {}

    def product_bug_trace(self) -> Tuple[List[Frame], List[Action], Dict[str, str]]:
        path = realize_scenario(self.spec.scenario, self._coin)
        frames, actions = self._frames(path)
        candidates = [k for k, (_, step, _) in enumerate(path) if k > 0 and not step.optional]
        k = self.rng.choice(candidates)
        pos, step, _ = path[k]
        frames[k] = Frame(f"broken_{step.name}", self.n + 2 + pos, frames[k].jitter)
        # the run either stalls on the wrong state or carries on past it
        if k < len(path) - 1 and self.rng.random() < 0.5:
            frames, actions = frames[:k + 1], actions[:k]
        return frames, actions, {"mutated_state": step.name}

    def agent_issue_trace(self) -> Tuple[List[Frame], List[Action], Dict[str, str]]:
        path = realize_scenario(self.spec.scenario, self._coin)
        frames, actions = self._frames(path)
        candidates = [k for k, (_, step, _) in enumerate(path)
                      if k < len(path) - 1 and not step.optional]
        k = self.rng.choice(candidates)
        frames, actions = frames[:k + 1], actions[:k]
        off_script = self.rng.choice(OFF_SCRIPT_ACTIONS)
        for d in range(self.rng.randint(1, len(DETOUR_STATES))):
            actions.append(off_script if d == 0 else DETOUR_EXIT)
            frames.append(Frame(DETOUR_STATES[d], self.n + d, self.rng.randrange(JITTER_LEVELS)))
        return frames, actions, {"diverged_after": path[k][1].name,
                                 "off_script_action": _signature(off_script)}

    def generate(self, out_dir: PathLike) -> SyntheticSuite:
        root = Path(out_dir)
        training: List[Path] = []
        for k in range(self.spec.n_training):
            trace_id = f"train-{k:02d}"
            frames, actions = self.training_trace(k)
            directory = root / "training" / trace_id
            write_trace(directory, trace_id, frames, actions, TraceRole.TRAINING,
                        {"category": PASSING}, self.renderer)
            training.append(directory)

        planned: List[Tuple[str, str, List[Frame], List[Action], Dict[str, str]]] = []
        makers = ((PASSING, self.spec.passing, self.passing_trace),
                  (AGENT_ISSUE, self.spec.agent_issue, self.agent_issue_trace),
                  (PRODUCT_BUG, self.spec.product_bug, self.product_bug_trace))
        for category, count, make in makers:
            for k in range(count):
                frames, actions, extra = make()
                planned.append((f"{category}-{k:02d}", category, frames, actions, extra))

        failing_ids = [p[0] for p in planned if p[1] != PASSING]
        passing_ids = [p[0] for p in planned if p[1] == PASSING]
        false_success = set(self.rng.sample(failing_ids, self.spec.false_success))
        missed_bug = set(self.rng.sample(passing_ids, self.spec.missed_bug))

        tests: List[GeneratedTrace] = []
        for trace_id, category, frames, actions, extra in planned:
            report = REPORTED_SUCCESS if category == PASSING else REPORTED_FAILURE
            overlay = None
            if trace_id in false_success:
                report, overlay = REPORTED_SUCCESS, FALSE_SUCCESS
            elif trace_id in missed_bug:
                report, overlay = REPORTED_FAILURE, MISSED_BUG
            metadata = dict(extra, category=category, self_report=report)
            if overlay:
                metadata["overlay"] = overlay
            directory = root / "test" / trace_id
            write_trace(directory, trace_id, frames, actions, TraceRole.TEST, metadata,
                        self.renderer)
            tests.append(GeneratedTrace(trace_id, directory, category, report, overlay))

        logger.info("Generated %d training and %d test traces under %s",
                    len(training), len(tests), root)
        return SyntheticSuite(root=root, training=tuple(training), tests=tuple(tests))


def generate_synthetic_suite(spec: BenchmarkSpec, out_dir: PathLike) -> SyntheticSuite:
    """Render a deterministic trace suite for ``spec`` under ``out_dir``."""
    return SuiteGenerator(spec).generate(out_dir)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionMetrics:
    """Pass/fail confusion counts; positive means a failure was detected."""
    true_positive: int = 0
    false_positive: int = 0
    true_negative: int = 0
    false_negative: int = 0

    @property
    def total(self) -> int:
        return self.true_positive + self.false_positive + self.true_negative + self.false_negative

    @property
    def accuracy(self) -> float:
        return (self.true_positive + self.true_negative) / self.total if self.total else 0.0

    @property
    def precision_defined(self) -> bool:
        return self.true_positive + self.false_positive > 0

    @property
    def recall_defined(self) -> bool:
        return self.true_positive + self.false_negative > 0

    @property
    def precision(self) -> float:
        if not self.precision_defined:
            return 0.0
        return self.true_positive / (self.true_positive + self.false_positive)

    @property
    def recall(self) -> float:
        if not self.recall_defined:
            return 0.0
        return self.true_positive / (self.true_positive + self.false_negative)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[bool, bool]]) -> "DetectionMetrics":
        """Build from (actually failing, predicted failing) pairs."""
        return cls(
            true_positive=sum(1 for a, p in pairs if a and p),
            false_positive=sum(1 for a, p in pairs if not a and p),
            true_negative=sum(1 for a, p in pairs if not a and not p),
            false_negative=sum(1 for a, p in pairs if a and not p),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "true_positive": self.true_positive,
            "false_positive": self.false_positive,
            "true_negative": self.true_negative,
            "false_negative": self.false_negative,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
        }


@dataclass
class CategoryTally:
    total: int = 0
    detected: int = 0

    @property
    def rate(self) -> float:
        return self.detected / self.total if self.total else 0.0

    def add(self, hit: bool) -> None:
        self.total += 1
        self.detected += int(hit)

    def to_dict(self) -> Dict[str, Any]:
        return {"total": self.total, "detected": self.detected, "rate": self.rate}


@dataclass(frozen=True)
class TraceOutcome:
    trace: GeneratedTrace
    result: ValidationResult

    @property
    def predicted_failure(self) -> bool:
        return not self.result.passed

    @property
    def detected(self) -> bool:
        """Whether the validator got this trace's category right."""
        if self.trace.overlay == MISSED_BUG or self.trace.category == PASSING:
            return self.result.passed
        return not self.result.passed

    def to_dict(self) -> Dict[str, Any]:
        rc = self.result.root_cause
        expected = self.trace.expected_root_cause
        return {
            "trace_id": self.trace.trace_id,
            "category": self.trace.category,
            "overlay": self.trace.overlay,
            "self_report": self.trace.self_report,
            "verdict": self.result.verdict.value,
            "coverage": self.result.coverage,
            "expected_root_cause": expected.value if expected else None,
            "root_cause": rc.classification.value if rc else None,
        }


@dataclass(frozen=True)
class BenchmarkReport:
    """Per-category detection, pass/fail metrics and root-cause accuracy."""
    spec: BenchmarkSpec
    essential_states: Tuple[str, ...]
    outcomes: Tuple[TraceOutcome, ...]
    detection: Dict[str, CategoryTally] = field(default_factory=dict)
    validator: DetectionMetrics = DetectionMetrics()
    self_report: DetectionMetrics = DetectionMetrics()
    root_cause: Dict[str, CategoryTally] = field(default_factory=dict)
    baseline_root_cause: Dict[str, CategoryTally] = field(default_factory=dict)

    @staticmethod
    def _overall(tallies: Mapping[str, CategoryTally]) -> float:
        total = sum(t.total for t in tallies.values())
        return sum(t.detected for t in tallies.values()) / total if total else 0.0

    @property
    def root_cause_accuracy(self) -> float:
        return self._overall(self.root_cause)

    @property
    def baseline_root_cause_accuracy(self) -> float:
        """Accuracy of always answering product_bug."""
        return self._overall(self.baseline_root_cause)

    @classmethod
    def from_outcomes(cls, spec: BenchmarkSpec, essential_states: Sequence[str],
                      outcomes: Sequence[TraceOutcome]) -> "BenchmarkReport":
        detection = {c: CategoryTally() for c in CATEGORIES}
        root_cause = {AGENT_ISSUE: CategoryTally(), PRODUCT_BUG: CategoryTally()}
        baseline = {AGENT_ISSUE: CategoryTally(), PRODUCT_BUG: CategoryTally()}
        for outcome in outcomes:
            trace = outcome.trace
            detection[trace.category].add(outcome.detected)
            if trace.overlay:
                detection[trace.overlay].add(outcome.detected)
            expected = trace.expected_root_cause
            if expected is not None:
                rc = outcome.result.root_cause
                root_cause[trace.category].add(rc is not None and rc.classification == expected)
                baseline[trace.category].add(expected == RootCauseKind.PRODUCT_BUG)

        validator = DetectionMetrics.from_pairs(
            [(o.trace.expected_root_cause is not None, o.predicted_failure) for o in outcomes])
        self_report = DetectionMetrics.from_pairs(
            [(o.trace.expected_root_cause is not None, o.trace.self_report == REPORTED_FAILURE)
             for o in outcomes])
        return cls(spec=spec, essential_states=tuple(essential_states), outcomes=tuple(outcomes),
                   detection=detection, validator=validator, self_report=self_report,
                   root_cause=root_cause, baseline_root_cause=baseline)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "essential_states": list(self.essential_states),
            "detection": {c: t.to_dict() for c, t in self.detection.items()},
            "validator": self.validator.to_dict(),
            "self_report": self.self_report.to_dict(),
            "root_cause": {
                "per_category": {c: t.to_dict() for c, t in self.root_cause.items()},
                "accuracy": self.root_cause_accuracy,
                "baseline_always_product_bug": {
                    "per_category": {c: t.to_dict() for c, t in self.baseline_root_cause.items()},
                    "accuracy": self.baseline_root_cause_accuracy,
                },
            },
            "traces": [o.to_dict() for o in self.outcomes],
        }


def evaluate_suite(spec: BenchmarkSpec, suite: SyntheticSuite,
                   judge: Optional[SemanticJudge] = None, max_workers: int = 4) -> BenchmarkReport:
    """Learn from the suite's training traces and validate every test trace."""
    judge = judge or MockJudge()
    training = [load_trace(p) for p in suite.training]
    model = learn_model(training, EquivalenceClassifier(judge=judge))
    opts = MatchOptions(spec.coverage_threshold)

    def run(generated: GeneratedTrace) -> TraceOutcome:
        result = validate_trace(load_trace(generated.path), model, opts, judge)
        return TraceOutcome(generated, result)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        outcomes = list(pool.map(run, suite.tests))

    report = BenchmarkReport.from_outcomes(spec, model.tree.essential_names(), outcomes)
    logger.info("Benchmark: accuracy %.3f (self-report %.3f), root-cause accuracy %.3f",
                report.validator.accuracy, report.self_report.accuracy,
                report.root_cause_accuracy)
    return report


def run_benchmark(spec: BenchmarkSpec, work_dir: Optional[PathLike] = None,
                  judge: Optional[SemanticJudge] = None, max_workers: int = 4) -> BenchmarkReport:
    """
    Generate a suite, learn, validate and score.

    Args:
        spec: Benchmark configuration
        work_dir: Where to keep the generated suite; a temporary directory
            that is removed afterwards when None
        judge: Tier-2 judge; the label-based mock by default
        max_workers: Validation threads
    """
    if work_dir is not None:
        return evaluate_suite(spec, generate_synthetic_suite(spec, work_dir), judge, max_workers)
    with tempfile.TemporaryDirectory(prefix="trace-oracle-bench-") as tmp:
        return evaluate_suite(spec, generate_synthetic_suite(spec, tmp), judge, max_workers)


def write_report(report: BenchmarkReport, path: PathLike) -> None:
    """Write a benchmark report as byte-stable JSON."""
    write_stable_json(path, report.to_dict())
