"""
Multi-tiered state equivalence.

Tier 0 compares image digests, Tier 1 bands the three visual metrics
against configurable thresholds, and Tier 2 asks the semantic judge about
pairs Tier 1 leaves ambiguous. The classifier caches every verdict and
keeps a union-find partition that is consistent with all Equivalent
verdicts it has issued.
"""

import logging
import threading
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, Generic, Mapping, Optional, Set, Tuple, TypeVar

from .errors import JudgeError, ThresholdError
from .judge import Confidence, MockJudge, SemanticJudge
from .metrics import VisualMetrics, compute_visual_metrics, load_image, phash_for
from .trace_model import StateObservation
from .utils import PathLike, read_json

logger = logging.getLogger(__name__)

T = TypeVar("T")


class Decision(str, Enum):
    EQUIVALENT = "equivalent"
    DISTINCT = "distinct"
    AMBIGUOUS = "ambiguous"


class Tier(str, Enum):
    TIER0 = "tier0"
    TIER1 = "tier1"
    TIER2 = "tier2"


class Phase(str, Enum):
    """Learning merges states into the model; validation matches against it."""
    LEARNING = "learning"
    VALIDATION = "validation"


class FallbackPolicy(str, Enum):
    """What to do when the semantic judge fails."""
    FAIL_FAST = "fail-fast"
    AS_DISTINCT = "distinct"


DEFAULT_FALLBACK = {
    Phase.LEARNING: FallbackPolicy.FAIL_FAST,
    Phase.VALIDATION: FallbackPolicy.AS_DISTINCT,
}


@dataclass(frozen=True)
class EquivalenceThresholds:
    """
    Tier-1 bands.

    Equal band: every metric on the "same" side of its bound (conjunctive).
    Distinct band: any metric on the "different" side (disjunctive).
    Everything else is ambiguous.
    """
    phash_equal_min: float = 0.95
    ssim_equal_min: float = 0.98
    pixel_ratio_equal_max: float = 0.01
    phash_distinct_max: float = 0.80
    ssim_distinct_max: float = 0.85
    pixel_ratio_distinct_min: float = 0.15

    def __post_init__(self) -> None:
        for name in ("phash_equal_min", "phash_distinct_max",
                     "pixel_ratio_equal_max", "pixel_ratio_distinct_min"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ThresholdError(f"{name} must be in [0, 1], got {value}")
        for name in ("ssim_equal_min", "ssim_distinct_max"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise ThresholdError(f"{name} must be in [-1, 1], got {value}")
        if not self.phash_equal_min > self.phash_distinct_max:
            raise ThresholdError("phash_equal_min must exceed phash_distinct_max")
        if not self.ssim_equal_min > self.ssim_distinct_max:
            raise ThresholdError("ssim_equal_min must exceed ssim_distinct_max")
        if not self.pixel_ratio_equal_max < self.pixel_ratio_distinct_min:
            raise ThresholdError("pixel_ratio_equal_max must be below pixel_ratio_distinct_min")

    def is_equal(self, m: VisualMetrics) -> bool:
        return (m.phash_similarity >= self.phash_equal_min
                and m.ssim >= self.ssim_equal_min
                and m.pixel_change_ratio <= self.pixel_ratio_equal_max)

    def is_distinct(self, m: VisualMetrics) -> bool:
        return (m.phash_similarity <= self.phash_distinct_max
                or m.ssim <= self.ssim_distinct_max
                or m.pixel_change_ratio >= self.pixel_ratio_distinct_min)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EquivalenceThresholds":
        """Build from a mapping; missing keys keep their defaults."""
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ThresholdError(f"Unknown threshold keys: {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except (TypeError, ValueError) as e:
            raise ThresholdError(f"Threshold values must be numbers: {e}") from e

    @classmethod
    def from_json(cls, path: PathLike) -> "EquivalenceThresholds":
        try:
            data = read_json(path)
        except (OSError, ValueError) as e:
            raise ThresholdError(f"Cannot read threshold file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ThresholdError(f"{path}: threshold file must hold a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class EquivalenceVerdict:
    """The outcome of comparing two observations, with the tier that decided it."""
    decision: Decision
    resolved_by: Tier
    metrics: Optional[VisualMetrics]
    explanation: str
    confidence: Confidence

    @property
    def equivalent(self) -> bool:
        return self.decision == Decision.EQUIVALENT


def tier1_compare(a: StateObservation, b: StateObservation,
                  thresholds: EquivalenceThresholds) -> EquivalenceVerdict:
    """
    Fast visual comparison of two observations.

    Byte-identical images are Equivalent at tier0 without computing metrics.
    Otherwise the metric triple is banded: all-equal gives Equivalent, any
    strongly different metric gives Distinct, anything else is Ambiguous.
    """
    if a.digest == b.digest:
        return EquivalenceVerdict(Decision.EQUIVALENT, Tier.TIER0, None,
                                  "Byte-identical images", Confidence.HIGH)

    image_a = load_image(a.image, a.digest)
    image_b = load_image(b.image, b.digest)
    metrics = compute_visual_metrics(
        image_a, image_b, hashes=(phash_for(a.image, a.digest), phash_for(b.image, b.digest)))
    summary = (f"phash={metrics.phash_similarity:.3f} ssim={metrics.ssim:.3f} "
               f"pixel_ratio={metrics.pixel_change_ratio:.3f}")

    if thresholds.is_equal(metrics):
        decision, confidence = Decision.EQUIVALENT, Confidence.HIGH
    elif thresholds.is_distinct(metrics):
        decision, confidence = Decision.DISTINCT, Confidence.HIGH
    else:
        decision, confidence = Decision.AMBIGUOUS, Confidence.LOW
    logger.debug("tier1 %s vs %s: %s (%s)", a.display_name, b.display_name, decision.value, summary)
    return EquivalenceVerdict(decision, Tier.TIER1, metrics, f"Visual metrics {summary}", confidence)


class DisjointSet(Generic[T]):
    """Union-find whose class representative is always the smallest member."""

    def __init__(self):
        self.parent: Dict[T, T] = {}

    def make_set(self, e: T) -> None:
        if e not in self.parent:
            self.parent[e] = e

    def __contains__(self, e: object) -> bool:
        return e in self.parent

    # find with path compression
    def find(self, e: T) -> T:
        self.make_set(e)
        root = e
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[e] != root:
            self.parent[e], e = root, self.parent[e]
        return root

    def union(self, x: T, y: T) -> T:
        x_root = self.find(x)
        y_root = self.find(y)
        if x_root == y_root:
            return x_root
        if y_root < x_root:  # type: ignore[operator]
            x_root, y_root = y_root, x_root
        self.parent[y_root] = x_root
        return x_root

    def sets(self) -> FrozenSet[FrozenSet[T]]:
        groups: Dict[T, Set[T]] = {}
        for e in self.parent:
            groups.setdefault(self.find(e), set()).add(e)
        return frozenset(frozenset(s) for s in groups.values())


def _pair_key(x: str, y: str) -> Tuple[str, str]:
    return (x, y) if x <= y else (y, x)


class EquivalenceClassifier:
    """
    Caches pairwise verdicts and keeps a partition of state digests.

    Once two digests share a class they stay equivalent, even if a later
    pairwise verdict would say otherwise; such contradictions are logged.
    """

    def __init__(self, thresholds: Optional[EquivalenceThresholds] = None,
                 judge: Optional[SemanticJudge] = None,
                 phase: Phase = Phase.LEARNING,
                 fallback: Optional[FallbackPolicy] = None):
        self.thresholds = thresholds or EquivalenceThresholds()
        self.judge = judge or MockJudge()
        self.phase = phase
        self.fallback = fallback or DEFAULT_FALLBACK[phase]
        self.judge_calls = 0
        self._classes: DisjointSet[str] = DisjointSet()
        self._cache: Dict[Tuple[str, str], EquivalenceVerdict] = {}
        self._settled: Set[str] = set()
        self._lock = threading.RLock()

    @classmethod
    def from_class_table(cls, table: Mapping[str, Any], **kwargs: Any) -> "EquivalenceClassifier":
        """
        Seed a classifier with a learned partition (digest -> class id).

        Seeded digests are settled: two of them are equivalent exactly when
        they share a class, without recomputing any metric.
        """
        classifier = cls(**kwargs)
        first_of_class: Dict[Any, str] = {}
        for digest in sorted(table):
            class_id = table[digest]
            classifier._classes.make_set(digest)
            if class_id in first_of_class:
                classifier._classes.union(first_of_class[class_id], digest)
            else:
                first_of_class[class_id] = digest
        classifier._settled.update(table)
        return classifier

    def find(self, digest: str) -> str:
        with self._lock:
            return self._classes.find(digest)

    def same_class(self, x: str, y: str) -> bool:
        with self._lock:
            if x not in self._classes or y not in self._classes:
                return False
            return self._classes.find(x) == self._classes.find(y)

    def classes(self) -> FrozenSet[FrozenSet[str]]:
        with self._lock:
            return self._classes.sets()

    def register(self, obs: StateObservation) -> str:
        """Make sure an observation's digest has a class; return its representative."""
        with self._lock:
            return self._classes.find(obs.digest)

    def cached_verdict(self, a: StateObservation, b: StateObservation) -> Optional[EquivalenceVerdict]:
        with self._lock:
            return self._cache.get(_pair_key(a.digest, b.digest))

    def _tier2(self, a: StateObservation, b: StateObservation,
               metrics: Optional[VisualMetrics]) -> EquivalenceVerdict:
        with self._lock:
            self.judge_calls += 1
        try:
            judgment = self.judge.judge(a, b)
        except JudgeError as e:
            if self.fallback == FallbackPolicy.FAIL_FAST:
                raise
            logger.warning("Judge failed for %s vs %s (%s); treating as distinct",
                           a.display_name, b.display_name, e)
            return EquivalenceVerdict(Decision.DISTINCT, Tier.TIER2, metrics,
                                      f"Judge unavailable ({e}); treated as distinct",
                                      Confidence.LOW)

        if judgment.equivalent and judgment.confidence == Confidence.LOW and self.phase == Phase.LEARNING:
            logger.warning("Low-confidence equivalence for %s vs %s demoted to distinct",
                           a.display_name, b.display_name)
            return EquivalenceVerdict(Decision.DISTINCT, Tier.TIER2, metrics,
                                      f"Low-confidence judgment demoted: {judgment.explanation}",
                                      Confidence.LOW)

        decision = Decision.EQUIVALENT if judgment.equivalent else Decision.DISTINCT
        return EquivalenceVerdict(decision, Tier.TIER2, metrics, judgment.explanation,
                                  judgment.confidence)

    def compare(self, a: StateObservation, b: StateObservation) -> EquivalenceVerdict:
        """
        Full cascade for one pair; never returns Ambiguous.

        The pair is processed in digest order, so compare(a, b) and
        compare(b, a) always agree.
        """
        if a.digest == b.digest:
            with self._lock:
                self._classes.make_set(a.digest)
            return EquivalenceVerdict(Decision.EQUIVALENT, Tier.TIER0, None,
                                      "Byte-identical images", Confidence.HIGH)
        if b.digest < a.digest:
            a, b = b, a
        key = (a.digest, b.digest)

        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            if a.digest in self._settled and b.digest in self._settled:
                same = self._classes.find(a.digest) == self._classes.find(b.digest)
                verdict = EquivalenceVerdict(
                    Decision.EQUIVALENT if same else Decision.DISTINCT, Tier.TIER0, None,
                    "Settled by learned classes", Confidence.HIGH)
                self._cache[key] = verdict
                return verdict

        verdict = tier1_compare(a, b, self.thresholds)
        if verdict.decision == Decision.AMBIGUOUS:
            verdict = self._tier2(a, b, verdict.metrics)

        with self._lock:
            # first writer wins so concurrent callers see one stable verdict
            verdict = self._cache.setdefault(key, verdict)
            if verdict.decision == Decision.EQUIVALENT:
                self._classes.union(a.digest, b.digest)
            else:
                self._classes.make_set(a.digest)
                self._classes.make_set(b.digest)
        return verdict

    def equivalent(self, a: StateObservation, b: StateObservation) -> bool:
        """True when the two observations belong to the same state class."""
        if a.digest == b.digest:
            return True
        if self.same_class(a.digest, b.digest):
            cached = self.cached_verdict(a, b)
            if cached is not None and not cached.equivalent:
                logger.warning("%s and %s were judged distinct but share a class; class wins",
                               a.display_name, b.display_name)
            return True
        return self.compare(a, b).equivalent


def states_equivalent(a: StateObservation, b: StateObservation,
                      cls: EquivalenceClassifier) -> bool:
    """Decide whether two observations show the same logical state."""
    return cls.equivalent(a, b)


def load_thresholds(path: Optional[PathLike]) -> EquivalenceThresholds:
    """Thresholds from a JSON file, or the defaults when ``path`` is None."""
    if path is None:
        return EquivalenceThresholds()
    if not Path(path).is_file():
        raise ThresholdError(f"Threshold file not found: {path}")
    return EquivalenceThresholds.from_json(path)
