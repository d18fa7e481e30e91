from __future__ import annotations

from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from crowdcafe.model import (
    Category,
    DanglingPreselectionRef,
    InvalidBatchSize,
    Job,
    Judgment,
    MissingField,
    NegativeDuration,
    PreselectionKind,
    PreselectionRule,
    SimilarityRule,
    SimilaritySpec,
    Unit,
    UnknownCategory,
    ValidationError,
    format_cents,
    judgment_duration,
    parse_rfc3339,
    to_rfc3339,
    validate_job,
)


def ts(*args):
    return datetime(*args, tzinfo=timezone.utc)


def base_job(**overrides) -> Job:
    defaults = dict(
        id="job-1",
        title="t",
        instructions="i",
        category=Category.ESPRESSO,
        batch_size=3,
        answer_fields=("relation",),
        reward=3,
        ui_template_ref="<p>{{text}}</p>",
    )
    defaults.update(overrides)
    return Job(**defaults)


class TestCategory:
    def test_three_labels_parse(self):
        assert Category.parse("espresso") is Category.ESPRESSO
        assert Category.parse("cappuccino") is Category.CAPPUCCINO
        assert Category.parse("wine") is Category.WINE

    @pytest.mark.parametrize("label", ["Espresso", "latte", "", "ESPRESSO", "tea"])
    def test_other_labels_rejected(self, label):
        with pytest.raises(UnknownCategory):
            Category.parse(label)

    def test_nominal_durations(self):
        assert Category.ESPRESSO.nominal_duration == 10
        assert Category.CAPPUCCINO.nominal_duration == 120
        assert Category.WINE.nominal_duration == 300


class TestValidateJob:
    def test_typical_labeling_job_passes(self):
        job = base_job(batch_size=3, category=Category.ESPRESSO, reward=3)
        assert validate_job(job) is job

    def test_zero_batch_size_rejected(self):
        with pytest.raises(InvalidBatchSize):
            validate_job(base_job(batch_size=0))

    def test_dangling_preselection_rejected(self):
        job = base_job(
            preselection=(PreselectionRule(PreselectionKind.WORKED_ON, "ghost"),)
        )
        with pytest.raises(DanglingPreselectionRef):
            validate_job(job, known_job_ids=["other"])

    def test_known_preselection_accepted(self):
        job = base_job(
            preselection=(PreselectionRule(PreselectionKind.WORKED_ON, "skill"),)
        )
        assert validate_job(job, known_job_ids=["skill"]) is job

    def test_empty_template_rejected(self):
        with pytest.raises(MissingField):
            validate_job(base_job(ui_template_ref=""))

    def test_negative_reward_rejected(self):
        with pytest.raises(ValidationError):
            validate_job(base_job(reward=-1))


class TestJudgmentDuration:
    def test_87_second_task(self):
        j = _judgment(started=ts(2026, 1, 1, 10, 0, 0), submitted=ts(2026, 1, 1, 10, 1, 27))
        assert judgment_duration(j) == 87.0

    def test_zero_duration(self):
        j = _judgment(started=ts(2026, 1, 1, 10), submitted=ts(2026, 1, 1, 10))
        assert judgment_duration(j) == 0.0

    def test_fractional_seconds(self):
        started = datetime(2026, 1, 1, 10, 0, 5, 500000, tzinfo=timezone.utc)
        submitted = datetime(2026, 1, 1, 10, 0, 15, 500000, tzinfo=timezone.utc)
        assert judgment_duration(_judgment(started, submitted)) == 10.0

    def test_negative_rejected(self):
        j = _judgment(started=ts(2026, 1, 1, 11), submitted=ts(2026, 1, 1, 10))
        with pytest.raises(NegativeDuration):
            judgment_duration(j)


def _judgment(started, submitted):
    return Judgment(
        id="jud-1",
        unit_id="unit-1",
        worker_id="w1",
        instance_id="inst-1",
        values={"relation": "yes"},
        started_at=started,
        submitted_at=submitted,
    )


class TestRoundTrips:
    def test_job_round_trip(self):
        job = base_job(
            preselection=(PreselectionRule(PreselectionKind.DID_NOT_WORK_ON, "j0"),),
            similarity=SimilaritySpec({"tags": SimilarityRule("set_jaccard", threshold=0.5)}),
        )
        assert Job.from_json(job.to_json()) == job

    def test_unit_round_trip(self):
        unit = Unit(id="unit-1", job_id="job-1", payload={"text": "hi"}, gold={"relation": "yes"})
        assert Unit.from_json(unit.to_json()) == unit

    def test_judgment_round_trip(self):
        j = _judgment(ts(2026, 1, 1, 10), ts(2026, 1, 1, 10, 1))
        assert Judgment.from_json(j.to_json()) == j

    @given(st.datetimes(min_value=datetime(1970, 1, 1), max_value=datetime(2100, 1, 1)))
    def test_rfc3339_round_trip(self, dt):
        dt = dt.replace(tzinfo=timezone.utc)
        assert parse_rfc3339(to_rfc3339(dt)) == dt

    def test_judgment_rejects_free_text_context(self):
        with pytest.raises(ValidationError):
            Judgment(
                id="jud-1",
                unit_id="unit-1",
                worker_id="w1",
                instance_id="inst-1",
                values={},
                context="on the moon",
                started_at=ts(2026, 1, 1, 10),
                submitted_at=ts(2026, 1, 1, 10),
            )


def test_money_formatting():
    assert format_cents(3) == "0.03"
    assert format_cents(60) == "0.60"
    assert format_cents(-60) == "-0.60"
    assert format_cents(133) == "1.33"
