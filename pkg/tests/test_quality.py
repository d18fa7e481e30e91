from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from crowdcafe.model import Judgment, SimilarityRule, SimilaritySpec
from crowdcafe.quality import (
    DuplicateWorker,
    GoldOutcome,
    KindMismatch,
    MissingAnswerField,
    MixedUnits,
    WorkerQualityState,
    aggregate_unit,
    apply_mistake_limit,
    evaluate_gold,
    gold_injection_probability,
    similar,
)

T0 = datetime(2026, 1, 1, tzinfo=timezone.utc)


def state(n_incorrect=0, n_correct=0, banned=False):
    return WorkerQualityState("w1", "job-1", n_incorrect, n_correct, banned)


class TestInjectionProbability:
    def test_fresh_worker_always_gets_gold(self):
        assert gold_injection_probability(state(0, 0)) == 1.0

    def test_hand_evaluated_values(self):
        assert gold_injection_probability(state(1, 3)) == pytest.approx(0.4, abs=1e-12)
        assert gold_injection_probability(state(0, 9)) == pytest.approx(0.1, abs=1e-12)

    def test_monotone_in_both_counters(self):
        for n_inc in range(51):
            for n_cor in range(51):
                p = gold_injection_probability(state(n_inc, n_cor))
                assert 0 < p <= 1
                if n_cor > 0:
                    assert p < gold_injection_probability(state(n_inc, n_cor - 1))
                    assert p < 1
                else:
                    assert p == 1
                if n_inc > 0 and n_cor > 0:
                    # at n_cor == 0 both sides saturate at 1
                    assert p > gold_injection_probability(state(n_inc - 1, n_cor))


class TestSimilar:
    def test_exact_identity(self):
        assert similar("yes", "yes", SimilarityRule("exact"))
        assert not similar("yes", "no", SimilarityRule("exact"))

    def test_numeric_tolerance(self):
        rule = SimilarityRule("numeric_tolerance", epsilon=0.01)
        assert similar(1.004, 1.0, rule)
        assert not similar(1.02, 1.0, rule)

    def test_numeric_tolerance_parses_strings(self):
        rule = SimilarityRule("numeric_tolerance", epsilon=0.5)
        assert similar("1.2", 1.0, rule)
        with pytest.raises(KindMismatch):
            similar("abc", 1.0, rule)

    def test_set_jaccard_boundary(self):
        rule = SimilarityRule("set_jaccard", threshold=0.5)
        assert similar(["a", "b", "c"], ["b", "c", "d"], rule)  # 2/4 = 0.5
        assert not similar(["a", "b", "c"], ["c", "d", "e"], rule)  # 1/5

    def test_set_jaccard_case_folds(self):
        rule = SimilarityRule("set_jaccard", threshold=0.5)
        assert similar(["duomo", "mountains"], ["Duomo", "mountains", "sky"], rule)

    def test_set_jaccard_empty_vs_empty(self):
        assert similar([], [], SimilarityRule("set_jaccard", threshold=1.0))

    def test_case_insensitive(self):
        rule = SimilarityRule("case_insensitive")
        assert similar("Yes", "yes", rule)
        with pytest.raises(KindMismatch):
            similar("yes", 1, rule)

    @given(
        st.sampled_from(["exact", "case_insensitive"]),
        st.text(max_size=10),
        st.text(max_size=10),
    )
    def test_symmetry_on_text(self, kind, a, b):
        rule = SimilarityRule(kind)
        assert similar(a, b, rule) == similar(b, a, rule)

    @given(
        st.lists(st.text(max_size=5), max_size=6),
        st.lists(st.text(max_size=5), max_size=6),
        st.floats(min_value=0.1, max_value=1.0),
    )
    def test_symmetry_on_sets(self, a, b, threshold):
        rule = SimilarityRule("set_jaccard", threshold=threshold)
        assert similar(a, b, rule) == similar(b, a, rule)


class TestEvaluateGold:
    def test_exact_match_correct(self):
        spec = SimilaritySpec()
        assert evaluate_gold({"relation": "yes"}, {"relation": "yes"}, spec) is GoldOutcome.CORRECT

    def test_exact_mismatch_incorrect(self):
        spec = SimilaritySpec()
        assert evaluate_gold({"relation": "no"}, {"relation": "yes"}, spec) is GoldOutcome.INCORRECT

    def test_jaccard_tags_correct(self):
        spec = SimilaritySpec({"tags": SimilarityRule("set_jaccard", threshold=0.5)})
        outcome = evaluate_gold(
            {"tags": ["Duomo", "mountains", "sky"]},
            {"tags": ["duomo", "mountains"]},
            spec,
        )
        assert outcome is GoldOutcome.CORRECT

    def test_missing_field_errors(self):
        with pytest.raises(MissingAnswerField):
            evaluate_gold({}, {"relation": "yes"}, SimilaritySpec())

    def test_counters_increment_exactly_once(self):
        s = state()
        s = s.record(GoldOutcome.CORRECT)
        s = s.record(GoldOutcome.INCORRECT)
        s = s.record(GoldOutcome.CORRECT)
        assert (s.n_correct, s.n_incorrect) == (2, 1)
        assert s.n_correct + s.n_incorrect == 3


class TestMistakeLimit:
    def test_default_zero_bans_on_first_mistake(self):
        assert apply_mistake_limit(state(n_incorrect=1), 0).banned

    def test_no_mistakes_active(self):
        assert not apply_mistake_limit(state(n_incorrect=0), 0).banned

    def test_strict_inequality_reading(self):
        assert not apply_mistake_limit(state(n_incorrect=2), 2).banned
        assert apply_mistake_limit(state(n_incorrect=3), 2).banned

    def test_ban_is_permanent(self):
        banned = apply_mistake_limit(state(n_incorrect=1), 0)
        assert apply_mistake_limit(banned, 5).banned


def judgment(worker, values, unit="unit-1", offset=0):
    return Judgment(
        id=f"jud-{worker}-{unit}",
        unit_id=unit,
        worker_id=worker,
        instance_id=f"inst-{worker}",
        values=values,
        started_at=T0,
        submitted_at=T0 + timedelta(seconds=offset),
    )


class TestAggregateUnit:
    FIELDS = ["relation"]
    SPEC = SimilaritySpec()

    def test_unanimous(self):
        js = [judgment(f"w{i}", {"relation": "yes"}, offset=i) for i in range(3)]
        result = aggregate_unit(js, self.FIELDS, self.SPEC, 3)
        assert result.state == "agreed"
        assert result.value == {"relation": "yes"}
        assert result.support == 3

    def test_majority_two_of_three(self):
        js = [
            judgment("w1", {"relation": "yes"}, offset=0),
            judgment("w2", {"relation": "no"}, offset=1),
            judgment("w3", {"relation": "yes"}, offset=2),
        ]
        result = aggregate_unit(js, self.FIELDS, self.SPEC, 3)
        assert result.state == "agreed"
        assert result.support == 2

    def test_below_threshold_pending(self):
        js = [judgment(f"w{i}", {"relation": "yes"}, offset=i) for i in range(2)]
        result = aggregate_unit(js, self.FIELDS, self.SPEC, 3)
        assert result.state == "pending"
        assert result.count == 2

    def test_three_way_split_no_agreement(self):
        js = [
            judgment("w1", {"relation": "yes"}),
            judgment("w2", {"relation": "no"}),
            judgment("w3", {"relation": "maybe"}),
        ]
        assert aggregate_unit(js, self.FIELDS, self.SPEC, 3).state == "no_agreement"

    def test_even_split_no_agreement(self):
        js = [
            judgment("w1", {"relation": "yes"}),
            judgment("w2", {"relation": "yes"}),
            judgment("w3", {"relation": "no"}),
            judgment("w4", {"relation": "no"}),
        ]
        assert aggregate_unit(js, self.FIELDS, self.SPEC, 4).state == "no_agreement"

    def test_canonical_value_is_earliest(self):
        spec = SimilaritySpec({"relation": SimilarityRule("case_insensitive")})
        js = [
            judgment("w1", {"relation": "YES"}, offset=5),
            judgment("w2", {"relation": "yes"}, offset=1),
            judgment("w3", {"relation": "Yes"}, offset=9),
        ]
        result = aggregate_unit(js, self.FIELDS, spec, 3)
        assert result.value == {"relation": "yes"}

    def test_permutation_invariant(self):
        js = [
            judgment("w1", {"relation": "yes"}, offset=0),
            judgment("w2", {"relation": "no"}, offset=1),
            judgment("w3", {"relation": "yes"}, offset=2),
        ]
        forward = aggregate_unit(js, self.FIELDS, self.SPEC, 3)
        backward = aggregate_unit(list(reversed(js)), self.FIELDS, self.SPEC, 3)
        assert forward == backward

    def test_mixed_units_rejected(self):
        js = [judgment("w1", {"relation": "yes"}), judgment("w2", {"relation": "yes"}, unit="unit-2")]
        with pytest.raises(MixedUnits):
            aggregate_unit(js, self.FIELDS, self.SPEC, 1)

    def test_duplicate_worker_rejected(self):
        js = [judgment("w1", {"relation": "yes"}), judgment("w1", {"relation": "no"})]
        with pytest.raises(DuplicateWorker):
            aggregate_unit(js, self.FIELDS, self.SPEC, 1)

    def test_single_linkage_chains(self):
        # 1.0 ~ 1.04 ~ 1.08 chain into one cluster even though 1.0 !~ 1.08
        spec = SimilaritySpec({"x": SimilarityRule("numeric_tolerance", epsilon=0.05)})
        js = [
            judgment("w1", {"x": 1.0}, offset=0),
            judgment("w2", {"x": 1.04}, offset=1),
            judgment("w3", {"x": 1.08}, offset=2),
        ]
        result = aggregate_unit(js, ["x"], spec, 3)
        assert result.state == "agreed"
        assert result.support == 3
        assert result.value == {"x": 1.0}
