from __future__ import annotations

import random
import threading

import pytest

from crowdcafe.engine import Platform
from crowdcafe.model import JobStatus, Unit, Worker
from crowdcafe.quality import MissingAnswerField
from crowdcafe.routing import (
    AlreadyReserved,
    NotEligible,
    NothingAvailable,
    ReservationExpired,
    ReservationPolicy,
    eligible,
)
from crowdcafe.storage import Store

from conftest import ESPRESSO_DRAFT, FakeClock, make_units_csv


def answers_for(platform, instance, value="yes"):
    return {unit_id: {"relation": value} for unit_id in instance.unit_ids}


def gold_unit_ids(platform, job_id):
    return {
        key
        for key, v in platform.store.list("units")
        if v["job_id"] == job_id and v.get("gold") is not None
    }


class TestEligible:
    def _job(self, platform, preselection, job_id=None):
        draft = {**ESPRESSO_DRAFT, "preselection": preselection}
        if job_id:
            draft["id"] = job_id
        job = platform.create_job(draft, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(3))
        return platform.publish(job.id)

    def test_survey_routed_to_double_participants(self, platform, worker):
        t1 = self._job(platform, [], "task1")
        t2 = self._job(platform, [], "task2")
        for job in (t1, t2):
            instance, _ = platform.claim("w1", job.id)
            platform.submit("w1", instance.id, answers_for(platform, instance))
        survey = self._job(
            platform,
            [
                {"kind": "worked_on", "job_id": "task1"},
                {"kind": "worked_on", "job_id": "task2"},
            ],
        )
        w = Worker.from_json(platform.store.get("workers", "w1"))
        history = {"task1", "task2"}
        assert eligible(w, survey, history)

    def test_no_rules_any_worker(self, platform, worker):
        job = self._job(platform, [])
        w = Worker("w1", "Worker One")
        assert eligible(w, job, set())

    def test_did_not_work_on_excludes(self, platform, worker):
        skill = self._job(platform, [], "skilltest")
        instance, _ = platform.claim("w1", skill.id)
        platform.submit("w1", instance.id, answers_for(platform, instance))
        restricted = self._job(
            platform, [{"kind": "did_not_work_on", "job_id": "skilltest"}]
        )
        w = Worker("w1", "Worker One")
        assert not eligible(w, restricted, {"skilltest"})
        assert eligible(Worker("w2", "Other"), restricted, set())

    def test_draft_and_banned_invisible(self, platform, worker):
        job = platform.create_job(ESPRESSO_DRAFT, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(3))
        w = Worker("w1", "Worker One")
        assert not eligible(w, job, set())  # draft
        published = platform.publish(job.id)
        assert not eligible(
            Worker("w1", "Worker One", frozenset({job.id})), published, set()
        )


class TestListAvailable:
    def test_full_availability(self, platform, worker):
        job = platform.create_job(ESPRESSO_DRAFT, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(231))
        platform.publish(job.id)
        listing = platform.list_jobs("w1", "espresso")
        assert len(listing) == 1
        assert listing[0]["instances_available"] == 77

    def test_judged_units_excluded(self, platform, worker):
        job = platform.create_job(ESPRESSO_DRAFT, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(231))
        platform.publish(job.id)
        # judge 15 units across 5 instances
        for _ in range(5):
            instance, _ = platform.claim("w1", job.id)
            platform.submit("w1", instance.id, answers_for(platform, instance))
        listing = platform.list_jobs("w1", "espresso")
        assert listing[0]["instances_available"] == 72

    def test_closed_units_omit_job(self, platform, worker):
        job = platform.create_job({**ESPRESSO_DRAFT, "min_judgments": 1}, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(3))
        platform.publish(job.id)
        instance, _ = platform.claim("w1", job.id)
        platform.submit("w1", instance.id, answers_for(platform, instance))
        # min_judgments 1: every unit finalized by the single pass
        assert platform.list_jobs("w1", "espresso") == []

    def test_categories_summary(self, platform, worker, published_job):
        categories = platform.categories("w1")
        by_name = {c["category"]: c for c in categories}
        assert by_name["espresso"]["available_jobs"] == 1
        assert by_name["wine"]["available_jobs"] == 0
        assert by_name["espresso"]["nominal_duration"] == 10


class TestClaim:
    def test_fresh_worker_gets_exactly_one_gold(self, platform, worker, published_job):
        instance, units = platform.claim("w1", published_job.id)
        gold = gold_unit_ids(platform, published_job.id)
        assert len(instance.unit_ids) == 3
        assert sum(1 for u in instance.unit_ids if u in gold) == 1

    def test_no_gold_pool_means_full_regular_batch(self, platform, worker):
        job = platform.create_job(ESPRESSO_DRAFT, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(6))
        platform.publish(job.id)
        instance, _ = platform.claim("w1", job.id)
        assert len(instance.unit_ids) == 3
        assert not gold_unit_ids(platform, job.id)

    def test_exhausted_worker_gets_nothing(self, platform, worker, published_job):
        while True:
            try:
                instance, _ = platform.claim("w1", published_job.id)
            except NothingAvailable:
                break
            platform.submit("w1", instance.id, answers_for(platform, instance))
        with pytest.raises(NothingAvailable):
            platform.claim("w1", published_job.id)

    def test_double_claim_rejected(self, platform, worker, published_job):
        platform.claim("w1", published_job.id)
        with pytest.raises(AlreadyReserved):
            platform.claim("w1", published_job.id)

    def test_banned_worker_not_eligible(self, platform, worker, published_job):
        instance, _ = platform.claim("w1", published_job.id)
        gold = gold_unit_ids(platform, published_job.id)
        answers = {
            u: {"relation": "no" if u in gold else "yes"} for u in instance.unit_ids
        }
        result = platform.submit("w1", instance.id, answers)
        assert result.banned
        with pytest.raises(NotEligible):
            platform.claim("w1", published_job.id)

    def test_seeded_claim_is_deterministic(self, clock):
        def build():
            platform = Platform(store=Store(), clock=FakeClock(), rng=random.Random(99))
            platform.upsert_user("w1", "W", "worker")
            job = platform.create_job(ESPRESSO_DRAFT, "req-1")
            platform.add_data(job.id, csv_bytes=make_units_csv(9))
            units = [k for k, v in platform.store.list("units")]
            platform.add_gold(job.id, {units[0]: {"relation": "yes"}})
            platform.publish(job.id)
            instance, _ = platform.claim("w1", job.id)
            return instance.unit_ids

        assert build() == build()

    def test_least_judged_first(self, platform, published_job):
        platform.upsert_user("w1", "W1", "worker")
        platform.upsert_user("w2", "W2", "worker")
        i1, _ = platform.claim("w1", published_job.id)
        platform.submit("w1", i1.id, answers_for(platform, i1))
        i2, _ = platform.claim("w2", published_job.id)
        gold = gold_unit_ids(platform, published_job.id)
        regular_first = [u for u in i2.unit_ids if u not in gold]
        judged_by_w1 = {j.unit_id for j in platform.job_judgments(published_job.id)}
        # w2's regular units avoid the ones w1 already judged while any exist
        untouched = [u for u in regular_first if u not in judged_by_w1]
        assert len(untouched) >= 1


class TestSubmit:
    def test_full_submission_credits_reward(self, platform, worker, published_job):
        instance, _ = platform.claim("w1", published_job.id)
        result = platform.submit("w1", instance.id, answers_for(platform, instance))
        assert len(result.judgments) == 3
        assert result.credited == 3
        assert platform.balance("w1") == 3

    def test_missing_field_rejects_everything(self, platform, worker, published_job):
        instance, _ = platform.claim("w1", published_job.id)
        answers = answers_for(platform, instance)
        del answers[instance.unit_ids[0]]["relation"]
        with pytest.raises(MissingAnswerField):
            platform.submit("w1", instance.id, answers)
        assert platform.job_judgments(published_job.id) == []
        assert platform.balance("w1") == 0

    def test_banning_submission_earns_nothing(self, platform, worker, published_job):
        instance, _ = platform.claim("w1", published_job.id)
        gold = gold_unit_ids(platform, published_job.id)
        answers = {
            u: {"relation": "no" if u in gold else "yes"} for u in instance.unit_ids
        }
        result = platform.submit("w1", instance.id, answers)
        assert result.banned
        assert result.credited == 0
        assert platform.balance("w1") == 0
        # judgments retained for audit, but flagged
        judgments = platform.job_judgments(published_job.id)
        assert len(judgments) == 3
        assert all(j.flagged for j in judgments)

    def test_finalization_at_min_judgments(self, platform, published_job):
        for i in range(3):
            platform.upsert_user(f"w{i}", f"W{i}", "worker")
        finalized = set()
        for i in range(3):
            instance, _ = platform.claim(f"w{i}", published_job.id)
            result = platform.submit(
                f"w{i}", instance.id, answers_for(platform, instance)
            )
            finalized.update(result.finalized_units)
        units = {k: Unit.from_json(v) for k, v in platform.store.list("units")}
        for unit_id in finalized:
            unit = units[unit_id]
            assert unit.status.state.value == "finalized"
            assert unit.status.value == {"relation": "yes"}
        gold = gold_unit_ids(platform, published_job.id)
        assert not finalized & gold

    def test_submit_after_ttl_expires(self, platform, clock, worker, published_job):
        instance, _ = platform.claim("w1", published_job.id)
        clock.advance(601)
        with pytest.raises(ReservationExpired):
            platform.submit("w1", instance.id, answers_for(platform, instance))

    def test_wrong_worker_rejected(self, platform, published_job):
        platform.upsert_user("w1", "W1", "worker")
        platform.upsert_user("w2", "W2", "worker")
        instance, _ = platform.claim("w1", published_job.id)
        from crowdcafe.routing import NotReserver

        with pytest.raises(NotReserver):
            platform.submit("w2", instance.id, answers_for(platform, instance))


class TestExpiry:
    def test_boundaries(self, platform, clock, worker, published_job):
        instance, _ = platform.claim("w1", published_job.id)
        reserved_at = instance.reserved_at
        assert platform.expire_reservations(now=reserved_at) == 0
        from datetime import timedelta

        assert platform.expire_reservations(now=reserved_at + timedelta(seconds=599)) == 0
        assert platform.expire_reservations(now=reserved_at + timedelta(seconds=601)) == 1
        # idempotent
        assert platform.expire_reservations(now=reserved_at + timedelta(seconds=601)) == 0

    def test_expired_units_reclaimable(self, platform, clock, worker, published_job):
        first, _ = platform.claim("w1", published_job.id)
        clock.advance(700)
        second, _ = platform.claim("w1", published_job.id)
        assert second.id != first.id


class TestConcurrentStress:
    def test_no_duplicate_worker_unit_judgments(self):
        platform = Platform(store=Store(), rng=random.Random(5))
        job = platform.create_job({**ESPRESSO_DRAFT, "min_judgments": 3}, "req-1")
        platform.add_data(job.id, csv_bytes=make_units_csv(30))
        platform.publish(job.id)
        n_workers = 8
        for i in range(n_workers):
            platform.upsert_user(f"w{i}", f"W{i}", "worker")

        def run(worker_id):
            rng = random.Random(worker_id)
            while True:
                try:
                    instance, _ = platform.claim(worker_id, job.id)
                except NothingAvailable:
                    return
                except Exception:
                    return
                platform.submit(
                    worker_id,
                    instance.id,
                    {u: {"relation": rng.choice(["yes", "no"])} for u in instance.unit_ids},
                )

        threads = [
            threading.Thread(target=run, args=(f"w{i}",)) for i in range(n_workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        judgments = platform.job_judgments(job.id)
        pairs = [(j.worker_id, j.unit_id) for j in judgments]
        assert len(pairs) == len(set(pairs))
        # ledger conservation under concurrency
        for i in range(n_workers):
            worker_id = f"w{i}"
            entries = platform.transactions(worker_id)
            assert platform.balance(worker_id) == sum(t.amount for t in entries)
