"""
Validation of new executions against a learned dominator tree.

A test trace passes when it contains the essential states of some
root-to-terminal path of the tree, in order, with any extra states in
between, and ends in a terminal state. Failures can be classified as agent
issues or product bugs from the actions recorded in the test trace.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .equivalence import EquivalenceClassifier, FallbackPolicy, Phase, states_equivalent
from .errors import EmptyModelError, EmptyTraceError, PreconditionError
from .graph_learn import DominatorTree, GraphNode, LearnedModel
from .judge import SemanticJudge
from .trace_model import StateObservation, Trace

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"


class RootCauseKind(str, Enum):
    AGENT_ISSUE = "agent_issue"
    PRODUCT_BUG = "product_bug"


@dataclass(frozen=True)
class MatchOptions:
    """Coverage threshold in percent; 100 requires every essential state."""
    coverage_threshold: float = 100.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.coverage_threshold <= 100.0:
            raise PreconditionError(
                f"Coverage threshold must be in [0, 100], got {self.coverage_threshold}")


@dataclass(frozen=True)
class MatchedState:
    """A reference state and the test-trace index it was found at."""
    ref: GraphNode
    test_index: int


@dataclass(frozen=True)
class RootCause:
    classification: RootCauseKind
    rationale: str
    divergence_index: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classification": self.classification.value,
            "rationale": self.rationale,
            "divergence_index": self.divergence_index,
        }


@dataclass(frozen=True)
class ValidationResult:
    """PASS/FAIL with the evidence behind it."""
    verdict: Verdict
    coverage: float
    matched: Tuple[MatchedState, ...]
    missing: Tuple[GraphNode, ...]
    terminal_match: bool
    explanation: str
    trace_id: str = ""
    root_cause: Optional[RootCause] = field(default=None, compare=False)

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.PASS

    def to_dict(self) -> Dict[str, Any]:
        """Report layout used by ``validate --json``."""
        report: Dict[str, Any] = {
            "trace_id": self.trace_id,
            "verdict": self.verdict.value,
            "coverage": self.coverage,
            "matched": [{"ref_state": m.ref.name, "test_index": m.test_index} for m in self.matched],
            "missing": [n.name for n in self.missing],
            "terminal_match": self.terminal_match,
            "explanation": self.explanation,
        }
        if self.root_cause is not None:
            report["root_cause"] = self.root_cause.to_dict()
        return report


def topological_order(tree: DominatorTree) -> List[GraphNode]:
    """Reference states S_ref: parents before descendants, ties by representative digest."""
    return [tree.node(n) for n in tree.topo_order]


def topological_subsequence_match(s_test: Sequence[StateObservation], s_ref: Sequence[GraphNode],
                                  cls: EquivalenceClassifier
                                  ) -> Tuple[List[MatchedState], List[GraphNode]]:
    """
    Greedy leftmost matching of reference states inside a test sequence.

    Each reference state, in order, is matched to the first equivalent test
    state after the previous match; extra test states are ignored and
    unmatched references are reported missing.
    """
    matched: List[MatchedState] = []
    missing: List[GraphNode] = []
    cursor = 0
    for ref in s_ref:
        if ref.representative is None:
            raise PreconditionError(f"Reference state {ref.name} has no representative observation")
        for j in range(cursor, len(s_test)):
            if states_equivalent(s_test[j], ref.representative, cls):
                matched.append(MatchedState(ref, j))
                cursor = j + 1
                break
        else:
            missing.append(ref)
    return matched, missing


def compute_coverage(matched: Sequence[Any], s_ref: Sequence[Any]) -> float:
    """Matched reference states over total reference states, in percent."""
    if not s_ref:
        raise EmptyModelError("Model has no reference states")
    return len(matched) / len(s_ref) * 100


def _format_coverage(coverage: float) -> str:
    return f"{coverage:.1f}%"


def _explain(verdict: Verdict, coverage: float, s_ref: Sequence[GraphNode],
             missing: Sequence[GraphNode], terminal_match: bool) -> str:
    if verdict == Verdict.PASS:
        return (f"All {len(s_ref) - len(missing)} of {len(s_ref)} essential states matched in order. "
                f"Coverage: {_format_coverage(coverage)}")
    text = (f"Missing essential states: {', '.join(n.name for n in missing) or 'none'}. "
            f"Coverage: {_format_coverage(coverage)}")
    if not terminal_match:
        text += ". Final state does not match any terminal state"
    return text


def validate_execution(t_test: Trace, tree: DominatorTree, opts: MatchOptions,
                       cls: EquivalenceClassifier) -> ValidationResult:
    """
    Validate one test trace against the dominator tree.

    Every root-to-terminal path of the tree is matched separately; the path
    with the highest coverage is reported (ties prefer a path whose own
    terminal matched, then terminal digest order). PASS requires coverage at
    or above the threshold and a final state equivalent to any terminal.
    """
    s_test = list(t_test.states)
    if not s_test:
        raise EmptyTraceError(f"Test trace '{t_test.id}' has no states")

    order = topological_order(tree)
    if not order:
        raise EmptyModelError("Model has no reference states")

    last = s_test[-1]
    terminal_hits = {t: states_equivalent(last, _representative(tree.node(t)), cls)
                     for t in tree.terminals}
    terminal_match = any(terminal_hits.values())

    best = None
    for rank, path in enumerate(tree.paths()):
        on_path = set(path)
        s_ref = [n for n in order if n.id in on_path]
        matched, missing = topological_subsequence_match(s_test, s_ref, cls)
        coverage = compute_coverage(matched, s_ref)
        score = (coverage, terminal_hits[path[-1]], -rank)
        if best is None or score > best[0]:
            best = (score, s_ref, matched, missing, coverage)

    assert best is not None
    _, s_ref, matched, missing, coverage = best
    passed = coverage >= opts.coverage_threshold and terminal_match
    verdict = Verdict.PASS if passed else Verdict.FAIL
    result = ValidationResult(
        verdict=verdict,
        coverage=coverage,
        matched=tuple(matched),
        missing=tuple(missing),
        terminal_match=terminal_match,
        explanation=_explain(verdict, coverage, s_ref, missing, terminal_match),
        trace_id=t_test.id,
    )
    logger.info("Trace %s: %s (coverage %s)", t_test.id, verdict.value, _format_coverage(coverage))
    return result


def _representative(node: GraphNode) -> StateObservation:
    if node.representative is None:
        raise PreconditionError(f"State {node.name} has no representative observation")
    return node.representative


def _locate(obs: StateObservation, tree: DominatorTree, cls: EquivalenceClassifier) -> Optional[int]:
    """Graph node an observation belongs to, or None if it matches none."""
    for node in tree.graph.nodes:
        if node.representative is not None and states_equivalent(obs, node.representative, cls):
            return node.id
    return None


def classify_root_cause(t_test: Trace, tree: DominatorTree, result: ValidationResult,
                        cls: EquivalenceClassifier) -> RootCause:
    """
    Heuristic agent-issue / product-bug split for a failed run.

    The test trace is walked over the execution graph until the first step
    that leaves it (an unknown state or a transition never seen in
    training). If the action taken there was taken from the same state in
    training, the product responded wrongly to a correct action: product
    bug. Otherwise the agent went off script: agent issue. A run that never
    leaves the graph but stops short of a terminal is an agent issue.

    Raises:
        PreconditionError: ``result`` is a PASS
    """
    if result.passed:
        raise PreconditionError("Root-cause classification only applies to FAIL results")

    graph = tree.graph
    previous = _locate(t_test.states[0], tree, cls)
    if previous is None:
        return RootCause(RootCauseKind.AGENT_ISSUE,
                         "Run did not start in the learned initial state", 0)

    for j in range(1, t_test.length):
        current = _locate(t_test.states[j], tree, cls)
        if current is not None and (current == previous or graph.has_edge(previous, current)):
            previous = current
            continue

        action = t_test.actions[j - 1]
        source = graph.node(previous)
        reached = "an unknown state" if current is None else f"'{graph.node(current).name}'"
        if action.signature in source.action_signatures:
            return RootCause(
                RootCauseKind.PRODUCT_BUG,
                f"Action {action.signature} from '{source.name}' matches training, "
                f"but led to {reached}",
                j,
            )
        return RootCause(
            RootCauseKind.AGENT_ISSUE,
            f"Action {action.signature} from '{source.name}' was never taken there in training "
            f"(known: {', '.join(source.action_signatures) or 'none'}); it led to {reached}",
            j,
        )

    last = graph.node(previous)
    ending = "a terminal state" if last.is_terminal else "a non-terminal state"
    return RootCause(
        RootCauseKind.AGENT_ISSUE,
        f"Every step follows the learned graph but the run stopped at '{last.name}', "
        f"{ending}, without covering the essential states",
        t_test.length - 1,
    )


def validation_classifier(model: LearnedModel, judge: Optional[SemanticJudge] = None,
                          fallback: Optional[FallbackPolicy] = None) -> EquivalenceClassifier:
    """A fresh validation-phase classifier seeded with the model's classes."""
    return EquivalenceClassifier.from_class_table(
        model.class_table(), thresholds=model.thresholds, judge=judge,
        phase=Phase.VALIDATION, fallback=fallback)


def validate_trace(t_test: Trace, model: LearnedModel, opts: Optional[MatchOptions] = None,
                   judge: Optional[SemanticJudge] = None,
                   fallback: Optional[FallbackPolicy] = None) -> ValidationResult:
    """
    Validate a trace against a learned model and classify the root cause of a FAIL.

    Each call uses its own classifier, so traces can be validated concurrently
    against one model.
    """
    cls = validation_classifier(model, judge, fallback)
    result = validate_execution(t_test, model.tree, opts or MatchOptions(), cls)
    if result.passed:
        return result
    return replace(result, root_cause=classify_root_cause(t_test, model.tree, result, cls))
