from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

import pytest

from crowdcafe.engine import Platform
from crowdcafe.routing import ReservationPolicy
from crowdcafe.storage import Store


class FakeClock:
    """Deterministic clock advancing a fixed step per reading."""

    def __init__(self, start=None, step=1.0):
        self.now = start or datetime(2026, 1, 1, tzinfo=timezone.utc)
        self.step = step

    def __call__(self):
        current = self.now
        self.now = self.now + timedelta(seconds=self.step)
        return current

    def advance(self, seconds):
        self.now = self.now + timedelta(seconds=seconds)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def platform(clock):
    return Platform(
        store=Store(),
        policy=ReservationPolicy(ttl=600),
        clock=clock,
        rng=random.Random(1234),
    )


ESPRESSO_DRAFT = {
    "title": "Sentence analysis",
    "instructions": "Read the sentence and answer both questions.",
    "category": "espresso",
    "batch_size": 3,
    "answer_fields": ["relation"],
    "min_judgments": 3,
    "reward": {"cents": 3, "currency": "EUR"},
    "ui_template_ref": "<p>{{text}}</p>",
    "mistake_limit": 0,
}


def make_units_csv(n, column="text"):
    rows = "\n".join(f"sentence {i}" for i in range(n))
    return f"{column}\n{rows}\n".encode()


@pytest.fixture
def published_job(platform):
    """A published 9-unit espresso job with one gold unit."""
    job = platform.create_job(ESPRESSO_DRAFT, owner_id="req-1")
    platform.add_data(job.id, csv_bytes=make_units_csv(9))
    units = [k for k, v in platform.store.list("units") if v["job_id"] == job.id]
    platform.add_gold(job.id, {units[0]: {"relation": "yes"}})
    return platform.publish(job.id)


@pytest.fixture
def worker(platform):
    platform.upsert_user("w1", "Worker One", "worker")
    return "w1"
