"""Tests for the equivalence module."""

import json
import random
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest  # noqa: E402
from PIL import Image  # noqa: E402

from src.equivalence import (Decision, DisjointSet, EquivalenceClassifier,  # noqa: E402
                             EquivalenceThresholds, FallbackPolicy, Phase, Tier,
                             load_thresholds, states_equivalent, tier1_compare)
from src.errors import JudgeTransportError, ThresholdError  # noqa: E402
from src.judge import Confidence, SemanticJudge, SemanticJudgment  # noqa: E402
from src.metrics import VisualMetrics  # noqa: E402
from src.trace_model import observation_from_file  # noqa: E402
from src.visualizer import FrameRenderer  # noqa: E402


class CountingJudge(SemanticJudge):
    """Answers a fixed judgment and counts calls."""

    def __init__(self, equivalent=True, confidence=Confidence.HIGH):
        self.calls = 0
        self.answer = SemanticJudgment(equivalent, "scripted", confidence)

    def judge(self, a, b):
        self.calls += 1
        return self.answer


class FailingJudge(SemanticJudge):
    def judge(self, a, b):
        raise JudgeTransportError("unreachable")


def render(tmp_path, name, palette, jitter=0, label=None):
    renderer = FrameRenderer()
    path = tmp_path / f"{name}-{jitter}.png"
    renderer.save(renderer.render(name, palette, jitter), path)
    return observation_from_file(0, path, label or name)


@pytest.fixture
def ambiguous_thresholds():
    """Bands no real pair can satisfy, so every non-identical pair goes to the judge."""
    return EquivalenceThresholds(phash_equal_min=1.0, ssim_equal_min=1.0,
                                 pixel_ratio_equal_max=0.0, phash_distinct_max=0.0,
                                 ssim_distinct_max=-1.0, pixel_ratio_distinct_min=1.0)


class TestThresholds:
    """Test suite for Tier-1 bands."""

    def test_defaults(self):
        """Test default band values."""
        t = EquivalenceThresholds()
        assert (t.phash_equal_min, t.ssim_equal_min, t.pixel_ratio_equal_max) == (0.95, 0.98, 0.01)
        assert (t.phash_distinct_max, t.ssim_distinct_max, t.pixel_ratio_distinct_min) == (0.80, 0.85, 0.15)

    def test_equal_band_is_conjunctive(self):
        """Test one metric outside the equal band makes the pair not equal."""
        t = EquivalenceThresholds()
        assert t.is_equal(VisualMetrics(0.96, 0.99, 0.005))
        assert not t.is_equal(VisualMetrics(0.96, 0.99, 0.02))

    def test_distinct_band_is_disjunctive(self):
        """Test one strongly different metric is enough for distinct."""
        t = EquivalenceThresholds()
        assert t.is_distinct(VisualMetrics(0.99, 0.99, 0.20))
        assert not t.is_distinct(VisualMetrics(0.90, 0.90, 0.05))

    def test_bands_never_both_hold(self):
        """Test no metric triple is in the equal and the distinct band at once."""
        rng = random.Random(17)
        edges = [0.0, 0.01, 0.15, 0.80, 0.85, 0.95, 0.98, 1.0]
        for t in (EquivalenceThresholds(),
                  EquivalenceThresholds(phash_equal_min=0.9, phash_distinct_max=0.6,
                                        ssim_equal_min=0.5, ssim_distinct_max=0.4)):
            for _ in range(2000):
                m = VisualMetrics(rng.choice([rng.random(), rng.choice(edges)]),
                                  rng.choice([rng.uniform(-1.0, 1.0), rng.choice(edges)]),
                                  rng.choice([rng.random(), rng.choice(edges)]))
                assert not (t.is_equal(m) and t.is_distinct(m)), m.as_dict()

    def test_overlapping_bands_rejected(self):
        """Test an equal bound below the distinct bound."""
        with pytest.raises(ThresholdError):
            EquivalenceThresholds(phash_equal_min=0.7, phash_distinct_max=0.8)

    def test_out_of_range_rejected(self):
        """Test a ratio outside [0, 1]."""
        with pytest.raises(ThresholdError):
            EquivalenceThresholds(pixel_ratio_distinct_min=1.5)

    def test_json_file(self, tmp_path):
        """Test missing keys keep defaults and unknown keys are rejected."""
        good = tmp_path / "t.json"
        good.write_text(json.dumps({"ssim_equal_min": 0.97}), encoding="utf-8")
        t = load_thresholds(good)
        assert t.ssim_equal_min == 0.97
        assert t.phash_equal_min == 0.95

        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"ssim_min": 0.97}), encoding="utf-8")
        with pytest.raises(ThresholdError):
            load_thresholds(bad)
        with pytest.raises(ThresholdError):
            load_thresholds(tmp_path / "missing.json")

    def test_defaults_without_file(self):
        """Test no path gives the default thresholds."""
        assert load_thresholds(None) == EquivalenceThresholds()


class TestTier1:
    """Test suite for the visual tier."""

    def test_identical_digest_is_tier0(self, tmp_path):
        """Test byte-identical images skip metric computation."""
        a = render(tmp_path, "launch", 1)
        verdict = tier1_compare(a, a, EquivalenceThresholds())
        assert verdict.decision == Decision.EQUIVALENT
        assert verdict.resolved_by == Tier.TIER0
        assert verdict.metrics is None

    def test_different_screens_distinct(self, tmp_path):
        """Test a loading screen and the main window land in the distinct band."""
        loading = render(tmp_path, "loading", 2)
        main = render(tmp_path, "main_window", 3)
        verdict = tier1_compare(loading, main, EquivalenceThresholds())
        assert verdict.decision == Decision.DISTINCT
        assert verdict.metrics.pixel_change_ratio >= 0.15

    def test_cosmetic_variant_not_distinct(self, tmp_path):
        """Test a jittered frame is never put in the distinct band."""
        clean = render(tmp_path, "results", 5)
        jittered = render(tmp_path, "results", 5, jitter=2, label="results#j2")
        verdict = tier1_compare(clean, jittered, EquivalenceThresholds())
        assert verdict.decision in (Decision.EQUIVALENT, Decision.AMBIGUOUS)
        assert verdict.metrics.pixel_change_ratio == 0.0

    def test_black_and_white_distinct(self, tmp_path):
        """Test a black and a white frame are distinct on every metric band."""
        paths = []
        for name, colour in (("black", (0, 0, 0)), ("white", (255, 255, 255))):
            paths.append(tmp_path / f"{name}.png")
            Image.new("RGB", (64, 64), colour).save(paths[-1], format="PNG")
        verdict = tier1_compare(observation_from_file(0, paths[0]),
                                observation_from_file(1, paths[1]), EquivalenceThresholds())
        assert verdict.decision == Decision.DISTINCT
        assert verdict.metrics.pixel_change_ratio == 1.0

    def test_recoloured_status_text_ambiguous(self, tmp_path):
        """Test an equal-brightness colour change in a small area is left to the judge."""
        frame = FrameRenderer().render("main_window", 3)
        observations = []
        for i, colour in enumerate(((200, 100, 50), (100, 151, 50))):
            img = frame.copy()
            img.paste(colour, (10, 100, 50, 112))
            path = tmp_path / f"clock-{i}.png"
            img.save(path, format="PNG")
            observations.append(observation_from_file(i, path))
        verdict = tier1_compare(*observations, EquivalenceThresholds())
        assert verdict.decision == Decision.AMBIGUOUS
        assert verdict.resolved_by == Tier.TIER1


class TestDisjointSet:
    """Test suite for union-find."""

    def test_smallest_element_is_representative(self):
        """Test the root is the minimum regardless of union order."""
        ds = DisjointSet()
        ds.union("c", "b")
        ds.union("d", "c")
        ds.union("a", "d")
        assert {ds.find(x) for x in "abcd"} == {"a"}

    def test_random_unions_match_naive_partition(self):
        """Test against merging plain sets on seeded random unions."""
        rng = random.Random(3)
        for _ in range(50):
            ds = DisjointSet()
            groups = {i: {i} for i in range(20)}
            for _ in range(15):
                x, y = rng.randrange(20), rng.randrange(20)
                ds.union(x, y)
                merged = groups[x] | groups[y]
                for e in merged:
                    groups[e] = merged
            for e in range(20):
                ds.make_set(e)
                assert ds.find(e) == min(groups[e])
            assert ds.sets() == frozenset(frozenset(g) for g in groups.values())


class TestClassifier:
    """Test suite for the tiered classifier."""

    def test_identical_digests_never_call_judge(self, tmp_path, ambiguous_thresholds):
        """Test tier0 answers without the judge."""
        judge = CountingJudge()
        cls = EquivalenceClassifier(ambiguous_thresholds, judge)
        a = render(tmp_path, "launch", 1)
        assert cls.equivalent(a, a)
        assert cls.compare(a, a).resolved_by == Tier.TIER0
        assert judge.calls == 0
        assert cls.judge_calls == 0

    def test_ambiguous_goes_to_judge_once(self, tmp_path, ambiguous_thresholds):
        """Test the judge decides ambiguous pairs and the verdict is cached."""
        judge = CountingJudge(equivalent=True)
        cls = EquivalenceClassifier(ambiguous_thresholds, judge)
        a = render(tmp_path, "results", 5)
        b = render(tmp_path, "results", 5, jitter=1, label="results#j1")
        first = cls.compare(a, b)
        assert first.resolved_by == Tier.TIER2
        assert first.equivalent
        assert cls.compare(b, a) is first
        assert judge.calls == 1
        assert cls.same_class(a.digest, b.digest)

    def test_symmetric(self, tmp_path):
        """Test compare(a, b) and compare(b, a) agree for fresh classifiers."""
        a = render(tmp_path, "launch", 1)
        b = render(tmp_path, "main_window", 3)
        assert (EquivalenceClassifier().compare(a, b).decision
                == EquivalenceClassifier().compare(b, a).decision)

    def test_class_wins_over_pairwise_verdict(self, tmp_path, ambiguous_thresholds, caplog):
        """Test transitivity through union-find overrides a later distinct verdict."""
        a = render(tmp_path, "form", 0, jitter=0, label="x")
        b = render(tmp_path, "form", 0, jitter=1, label="y")
        c = render(tmp_path, "form", 0, jitter=2, label="z")
        judge = CountingJudge(equivalent=True)
        cls = EquivalenceClassifier(ambiguous_thresholds, judge)
        assert cls.equivalent(a, b)
        assert cls.equivalent(b, c)
        judge.answer = SemanticJudgment(False, "scripted", Confidence.HIGH)
        assert cls.compare(a, c).decision == Decision.DISTINCT
        assert cls.equivalent(a, c)
        assert "class wins" in caplog.text

    def test_learning_fail_fast(self, tmp_path, ambiguous_thresholds):
        """Test judge failures abort learning by default."""
        cls = EquivalenceClassifier(ambiguous_thresholds, FailingJudge(), Phase.LEARNING)
        with pytest.raises(JudgeTransportError):
            cls.compare(render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1))

    def test_validation_falls_back_to_distinct(self, tmp_path, ambiguous_thresholds):
        """Test judge failures count as distinct while validating."""
        cls = EquivalenceClassifier(ambiguous_thresholds, FailingJudge(), Phase.VALIDATION)
        verdict = cls.compare(render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1))
        assert verdict.decision == Decision.DISTINCT
        assert verdict.confidence == Confidence.LOW

    def test_fallback_override(self, tmp_path, ambiguous_thresholds):
        """Test the policy flag overrides the phase default."""
        cls = EquivalenceClassifier(ambiguous_thresholds, FailingJudge(), Phase.LEARNING,
                                    fallback=FallbackPolicy.AS_DISTINCT)
        verdict = cls.compare(render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1))
        assert verdict.decision == Decision.DISTINCT

    def test_low_confidence_demoted_while_learning(self, tmp_path, ambiguous_thresholds):
        """Test a low-confidence 'equivalent' does not merge states during learning."""
        judge = CountingJudge(equivalent=True, confidence=Confidence.LOW)
        a, b = render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1)
        learning = EquivalenceClassifier(ambiguous_thresholds, judge, Phase.LEARNING)
        assert not learning.equivalent(a, b)
        validating = EquivalenceClassifier(ambiguous_thresholds, judge, Phase.VALIDATION)
        assert validating.equivalent(a, b)

    def test_settled_classes(self, tmp_path, ambiguous_thresholds):
        """Test digests from a class table are decided by membership alone."""
        a, b = render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1)
        c = render(tmp_path, "c", 4)
        judge = CountingJudge(equivalent=True)
        cls = EquivalenceClassifier.from_class_table(
            {a.digest: 0, b.digest: 0, c.digest: 1},
            thresholds=ambiguous_thresholds, judge=judge, phase=Phase.VALIDATION)
        assert cls.equivalent(a, b)
        assert not cls.equivalent(a, c)
        assert judge.calls == 0

    def test_states_equivalent_uses_classifier(self, tmp_path, ambiguous_thresholds):
        """Test the module-level helper answers through the given classifier."""
        judge = CountingJudge(equivalent=False)
        cls = EquivalenceClassifier(ambiguous_thresholds, judge)
        a, b = render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1)
        assert states_equivalent(a, a, cls)
        assert not states_equivalent(a, b, cls)
        assert judge.calls == 1

    def test_classes_agree_with_find(self, tmp_path, ambiguous_thresholds):
        """Test the partition groups exactly the digests with a shared representative."""
        judge = CountingJudge(equivalent=True)
        cls = EquivalenceClassifier(ambiguous_thresholds, judge)
        a, b = render(tmp_path, "a", 0), render(tmp_path, "a", 0, jitter=1)
        c = render(tmp_path, "c", 4)
        assert cls.equivalent(a, b)
        judge.answer = SemanticJudgment(False, "scripted", Confidence.HIGH)
        assert not cls.equivalent(a, c)
        classes = cls.classes()
        assert frozenset({a.digest, b.digest}) in classes
        assert frozenset({c.digest}) in classes
        for group in classes:
            assert {cls.find(d) for d in group} == {min(group)}
