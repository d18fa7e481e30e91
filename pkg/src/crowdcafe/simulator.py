"""Seeded synthetic-worker campaign driver.

Drives n workers through claim/submit loops against the HTTP API of an
in-process service instance, so it doubles as a demo and an integration
harness.  Workers never touch storage: everything goes through Cafe
endpoints, and the report is assembled from the Kitchen results endpoint.

With parallelism 1 (the default) workers advance in round-robin order and
the whole campaign is deterministic for a fixed seed: the report hash is
reproducible run to run.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from fastapi.testclient import TestClient

from .engine import Platform
from .model import CrowdCafeError
from .service import create_app

__all__ = [
    "BehaviorProfile",
    "NoPublishedJobs",
    "run_simulation",
    "setup_demo_campaign",
    "truth_value",
]

CONTEXT_CHOICES = ("workplace", "outside", "bus", "home", "train", "unspecified")


class NoPublishedJobs(CrowdCafeError):
    code = "no_published_jobs"


@dataclass(frozen=True)
class BehaviorProfile:
    """How a synthetic worker behaves.

    accuracy is the probability of answering with the unit's true value
    (gold answers are seeded from the same truth function, so it is also
    the probability of passing a gold check).
    """

    accuracy: float = 0.95
    answer_choices: Sequence[str] = ("yes", "no")
    contexts: Sequence[str] = CONTEXT_CHOICES


def truth_value(unit_id: str, field_name: str, choices: Sequence[str]) -> str:
    """Deterministic 'true' answer for a unit, shared by gold seeding and
    workers; independent of any per-run seed."""
    digest = hashlib.sha256(f"{unit_id}|{field_name}".encode()).digest()
    return choices[digest[0] % len(choices)]


def _wrong_value(unit_id: str, field_name: str, choices: Sequence[str]) -> str:
    truth = truth_value(unit_id, field_name, choices)
    index = (choices.index(truth) + 1) % len(choices)
    return choices[index]


def setup_demo_campaign(
    platform: Platform,
    n_units: int = 231,
    batch_size: int = 3,
    min_judgments: int = 3,
    reward: int = 3,
    n_gold: int = 10,
    answer_field: str = "relation",
    choices: Sequence[str] = ("yes", "no"),
    mistake_limit: int = 0,
) -> str:
    """Create and publish a gold-bearing demo job through the Kitchen API."""
    token = platform.upsert_user("sim-operator", "Operator", "admin", "sim-operator-token")
    client = TestClient(create_app(platform))
    headers = {"Authorization": f"Bearer {token}"}

    draft = {
        "title": "Simulated campaign",
        "instructions": "Answer the question for every item.",
        "category": "espresso",
        "batch_size": batch_size,
        "answer_fields": [answer_field],
        "min_judgments": min_judgments,
        "reward": {"cents": reward, "currency": "EUR"},
        "ui_template_ref": "<p>{{text}}</p>",
        "mistake_limit": mistake_limit,
    }
    response = client.post("/kitchen/jobs", json=draft, headers=headers)
    response.raise_for_status()
    job_id = response.json()["id"]

    csv_body = "text\n" + "\n".join(f"item {i}" for i in range(n_units)) + "\n"
    response = client.post(
        f"/kitchen/jobs/{job_id}/data",
        files={"file": ("data.csv", csv_body.encode(), "text/csv")},
        headers=headers,
    )
    response.raise_for_status()

    if n_gold > 0:
        results = client.get(f"/kitchen/jobs/{job_id}/results", headers=headers).json()
        unit_ids = [row["unit"]["id"] for row in results["units"]]
        gold = {
            unit_id: {answer_field: truth_value(unit_id, answer_field, choices)}
            for unit_id in unit_ids[:n_gold]
        }
        client.post(f"/kitchen/jobs/{job_id}/gold", json=gold, headers=headers).raise_for_status()

    client.post(f"/kitchen/jobs/{job_id}/publish", headers=headers).raise_for_status()
    return job_id


class _SimWorker:
    def __init__(self, worker_id: str, token: str, rng: random.Random, profile: BehaviorProfile):
        self.id = worker_id
        self.headers = {"Authorization": f"Bearer {token}"}
        self.rng = rng
        self.profile = profile
        self.done = False
        self.banned = False
        self.judgments = 0
        self.instances = 0

    def step(self, client: TestClient, job_id: str, answer_fields: List[str]) -> None:
        """One claim + submit round; marks the worker done on exhaustion."""
        response = client.post(f"/cafe/jobs/{job_id}/claim", headers=self.headers)
        if response.status_code != 200:
            self.done = True
            return
        body = response.json()
        instance_id = body["instance"]["id"]
        answers = {}
        for unit in body["units"]:
            unit_answers = {}
            for field_name in answer_fields:
                if self.rng.random() < self.profile.accuracy:
                    value = truth_value(unit["id"], field_name, self.profile.answer_choices)
                else:
                    value = _wrong_value(unit["id"], field_name, self.profile.answer_choices)
                unit_answers[field_name] = value
            answers[unit["id"]] = unit_answers
        context = self.profile.contexts[self.rng.randrange(len(self.profile.contexts))]
        response = client.post(
            f"/cafe/instances/{instance_id}/submit",
            json={"answers": answers, "context": context},
            headers=self.headers,
        )
        if response.status_code != 200:
            self.done = True
            return
        ack = response.json()
        self.instances += 1
        self.judgments += len(ack["units"])
        if ack["banned"]:
            self.banned = True
            self.done = True


def run_simulation(
    platform: Platform,
    n_workers: int,
    profile: BehaviorProfile = BehaviorProfile(),
    seed: int = 0,
    job_id: Optional[str] = None,
    parallelism: int = 1,
) -> dict:
    """Run a full campaign; returns a deterministic report with its hash."""
    # gold injection draws from the platform's rng; reseed it so two runs
    # with the same seed inject gold at the same points
    platform.rng = random.Random(f"sim-platform:{seed}")
    if job_id is None:
        published = [
            key
            for key, value in platform.store.list("jobs")
            if value["status"] == "published"
        ]
        if not published:
            raise NoPublishedJobs("no published jobs to simulate against")
        job_id = published[0]
    job = platform.get_job(job_id)

    client = TestClient(create_app(platform))
    workers = []
    for i in range(n_workers):
        worker_id = f"sim-w{i:03d}"
        token = f"sim-token-{seed}-{i:03d}"
        platform.upsert_user(worker_id, f"Sim Worker {i}", "worker", token)
        workers.append(
            _SimWorker(worker_id, token, random.Random(f"{seed}:{i}"), profile)
        )

    answer_fields = list(job.answer_fields)
    if parallelism <= 1:
        # round-robin: deterministic interleaving
        while any(not w.done for w in workers):
            for worker in workers:
                if not worker.done:
                    worker.step(client, job_id, answer_fields)
    else:
        def drain(worker: _SimWorker) -> None:
            while not worker.done:
                worker.step(client, job_id, answer_fields)

        threads = [threading.Thread(target=drain, args=(w,)) for w in workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    return _build_report(platform, client, job_id, workers, seed, profile)


def _build_report(
    platform: Platform,
    client: TestClient,
    job_id: str,
    workers: List[_SimWorker],
    seed: int,
    profile: BehaviorProfile,
) -> dict:
    operator_token = platform.upsert_user("sim-operator", "Operator", "admin")
    headers = {"Authorization": f"Bearer {operator_token}"}
    results = client.get(f"/kitchen/jobs/{job_id}/results", headers=headers).json()

    unit_stats = {"finalized": 0, "no_agreement": 0, "open": 0}
    gold_units = 0
    judgment_total = 0
    countable_per_unit = []
    for row in results["units"]:
        unit = row["unit"]
        judgment_total += len(row["judgments"])
        if unit.get("gold") is not None:
            gold_units += 1
            continue
        unit_stats[
            {"finalized": "finalized", "no_agreement": "no_agreement", "open": "open"}[
                unit["status"]["state"]
            ]
        ] += 1
        countable_per_unit.append(
            sum(1 for j in row["judgments"] if not j.get("flagged"))
        )

    balances = {}
    for worker in workers:
        response = client.get("/cafe/transactions", headers=worker.headers)
        balances[worker.id] = response.json()["balance"]["cents"]

    report = {
        "seed": seed,
        "job_id": job_id,
        "workers": len(workers),
        "accuracy": profile.accuracy,
        "judgments": judgment_total,
        "instances_submitted": sum(w.instances for w in workers),
        "banned_workers": sorted(w.id for w in workers if w.banned),
        "units": {
            **unit_stats,
            "gold": gold_units,
            "min_countable_judgments": min(countable_per_unit) if countable_per_unit else 0,
            "max_countable_judgments": max(countable_per_unit) if countable_per_unit else 0,
        },
        "total_payout_cents": sum(balances.values()),
        "balances": balances,
    }
    canonical = json.dumps(report, sort_keys=True, separators=(",", ":"))
    report["report_hash"] = hashlib.sha256(canonical.encode()).hexdigest()
    return report
