"""Platform facade: transactional operations composing ingestion, routing,
quality, and ledger over the embedded store.

Both the HTTP service and the admin CLI go through this class; nothing
else touches the store directly.
"""

from __future__ import annotations

import random
import secrets
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from . import ingestion, ledger, routing
from .model import (
    Category,
    CrowdCafeError,
    Job,
    JobStatus,
    Judgment,
    TaskInstance,
    Unit,
    UnitStatus,
    ValidationError,
    Worker,
    judgment_duration,
    validate_job,
)
from .quality import WorkerQualityState
from .routing import ReservationPolicy
from .storage import Store, StoreTxn

__all__ = ["Platform", "StateConflict", "UnknownJob"]


class UnknownJob(CrowdCafeError):
    code = "unknown_job"

    def __init__(self, job_id: str):
        super().__init__(f"no such job: {job_id}")
        self.job_id = job_id


class StateConflict(CrowdCafeError):
    """The job is not in a state that admits the requested transition."""

    code = "conflict"


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Platform:
    def __init__(
        self,
        store: Optional[Store] = None,
        feed_fixture: Optional[Path] = None,
        policy: ReservationPolicy = ReservationPolicy(),
        clock: Callable[[], datetime] = _utcnow,
        rng: Optional[random.Random] = None,
    ):
        self.store = store or Store()
        self.policy = policy
        self.clock = clock
        self.rng = rng or random.Random()
        self.adapters: Dict[str, ingestion.FeedAdapter] = {}
        if feed_fixture is not None:
            self.adapters["fixture"] = ingestion.FixtureFeedAdapter(feed_fixture)

    # -- users -------------------------------------------------------------

    def upsert_user(
        self,
        user_id: str,
        display_name: str,
        role: str,
        token: Optional[str] = None,
    ) -> str:
        """Create or update a user; returns the (possibly generated) token."""
        if role not in ("worker", "requestor", "admin"):
            raise ValidationError(f"unknown role: {role!r}")

        def body(txn: StoreTxn) -> str:
            existing = txn.get("users", user_id)
            user_token = token or (existing or {}).get("token") or secrets.token_hex(16)
            if existing and existing["token"] != user_token:
                txn.delete("sessions", existing["token"])
            txn.put(
                "users",
                user_id,
                {
                    "id": user_id,
                    "display_name": display_name,
                    "role": role,
                    "token": user_token,
                },
            )
            txn.put("sessions", user_token, {"principal": user_id, "role": role})
            if role == "worker" and txn.get("workers", user_id) is None:
                txn.put("workers", user_id, Worker(user_id, display_name).to_json())
            return user_token

        return self.store.transact(body)

    def authenticate(self, token: str) -> Optional[dict]:
        return self.store.get("sessions", token)

    def _worker(self, txn: StoreTxn, worker_id: str) -> Worker:
        record = txn.get("workers", worker_id)
        if record is None:
            raise CrowdCafeError(f"unknown worker: {worker_id}")
        return Worker.from_json(record)

    # -- kitchen -----------------------------------------------------------

    def create_job(self, draft: Mapping, owner_id: str) -> Job:
        def body(txn: StoreTxn) -> Job:
            job_id = draft.get("id") or txn.next_id("job")
            job = Job.from_json(
                {**draft, "id": job_id, "status": "draft", "owner_id": owner_id}
            )
            known = [key for key, _ in txn.list("jobs")]
            validate_job(job, known)
            if txn.get("jobs", job.id) is not None:
                raise ValidationError(f"job {job.id} already exists")
            txn.put("jobs", job.id, job.to_json())
            return job

        return self.store.transact(body)

    def get_job(self, job_id: str) -> Job:
        record = self.store.get("jobs", job_id)
        if record is None:
            raise UnknownJob(job_id)
        return Job.from_json(record)

    def add_data(
        self,
        job_id: str,
        csv_bytes: Optional[bytes] = None,
        feed_query: Optional[ingestion.FeedQuery] = None,
    ) -> Dict[str, int]:
        """Attach the input dataset: CSV bytes, a feed query, or nothing
        (survey).  Returns unit and instance counts for the batching preview."""
        if csv_bytes is not None:
            payloads = ingestion.parse_csv(csv_bytes)
        elif feed_query is not None:
            payloads = ingestion.fetch_feed(self.adapters, feed_query)
        else:
            payloads = None  # survey

        def body(txn: StoreTxn) -> Dict[str, int]:
            record = txn.get("jobs", job_id)
            if record is None:
                raise UnknownJob(job_id)
            job = Job.from_json(record)
            if job.status is not JobStatus.DRAFT:
                raise StateConflict(f"job {job_id} is not a draft")
            existing = [v for _, v in txn.list("units") if v["job_id"] == job_id]
            if existing:
                raise StateConflict(f"job {job_id} already has data")
            if payloads is None:
                txn.put("jobs", job_id, {**job.to_json(), "survey": True})
                unit = Unit(id=txn.next_id("unit"), job_id=job_id, payload={})
                txn.put("units", unit.id, unit.to_json())
                return {"units": 1, "instances": 1}
            for payload in payloads:
                unit = Unit(id=txn.next_id("unit"), job_id=job_id, payload=payload)
                txn.put("units", unit.id, unit.to_json())
            sizes = ingestion.batch_units(len(payloads), job.batch_size)
            return {"units": len(payloads), "instances": len(sizes)}

        return self.store.transact(body)

    def add_gold(self, job_id: str, gold: Mapping[str, Mapping]) -> int:
        """Attach known answers to existing units; keys are unit ids."""

        def body(txn: StoreTxn) -> int:
            record = txn.get("jobs", job_id)
            if record is None:
                raise UnknownJob(job_id)
            job = Job.from_json(record)
            count = 0
            for unit_id, answer in gold.items():
                unit_record = txn.get("units", unit_id)
                if unit_record is None or unit_record["job_id"] != job_id:
                    raise ValidationError(f"gold references unknown unit: {unit_id}")
                for field in answer:
                    if field not in job.answer_fields:
                        raise ValidationError(
                            f"gold field {field!r} is not an answer field"
                        )
                txn.put("units", unit_id, {**unit_record, "gold": dict(answer)})
                count += 1
            return count

        return self.store.transact(body)

    def publish(self, job_id: str) -> Job:
        def body(txn: StoreTxn) -> Job:
            record = txn.get("jobs", job_id)
            if record is None:
                raise UnknownJob(job_id)
            job = Job.from_json(record)
            if job.status is not JobStatus.DRAFT:
                raise StateConflict(f"job {job_id} is already {job.status.value}")
            has_units = any(v["job_id"] == job_id for _, v in txn.list("units"))
            if not has_units:
                raise ValidationError(f"job {job_id} has no data")
            published = job.with_status(JobStatus.PUBLISHED)
            txn.put("jobs", job_id, published.to_json())
            return published

        return self.store.transact(body)

    def close_job(self, job_id: str) -> Job:
        def body(txn: StoreTxn) -> Job:
            record = txn.get("jobs", job_id)
            if record is None:
                raise UnknownJob(job_id)
            job = Job.from_json(record).with_status(JobStatus.CLOSED)
            txn.put("jobs", job_id, job.to_json())
            return job

        return self.store.transact(body)

    def results(self, job_id: str) -> dict:
        """Per-unit status and raw judgment rows with duration and context."""

        def body(txn: StoreTxn) -> dict:
            if txn.get("jobs", job_id) is None:
                raise UnknownJob(job_id)
            units = [
                Unit.from_json(v)
                for _, v in txn.list("units")
                if v["job_id"] == job_id
            ]
            unit_ids = {u.id for u in units}
            judgments = [
                Judgment.from_json(v)
                for _, v in txn.list("judgments")
                if v["unit_id"] in unit_ids
            ]
            by_unit: Dict[str, List[Judgment]] = {}
            for j in judgments:
                by_unit.setdefault(j.unit_id, []).append(j)
            rows = []
            for unit in units:
                rows.append(
                    {
                        "unit": unit.to_json(),
                        "judgments": [
                            {
                                **j.to_json(),
                                "duration": judgment_duration(j),
                            }
                            for j in sorted(
                                by_unit.get(unit.id, []), key=lambda j: j.submitted_at
                            )
                        ],
                    }
                )
            return {"job_id": job_id, "units": rows}

        return self.store.transact(body)

    def job_judgments(self, job_id: str) -> List[Judgment]:
        unit_ids = {
            key
            for key, value in self.store.list("units")
            if value["job_id"] == job_id
        }
        return [
            Judgment.from_json(value)
            for _, value in self.store.list("judgments")
            if value["unit_id"] in unit_ids
        ]

    # -- cafe --------------------------------------------------------------

    def categories(self, worker_id: str) -> List[dict]:
        def body(txn: StoreTxn) -> List[dict]:
            worker = self._worker(txn, worker_id)
            available = routing.list_available(txn, worker)
            out = []
            for category in Category:
                jobs = [job for job, _ in available if job.category is category]
                out.append(
                    {
                        "category": category.value,
                        "nominal_duration": category.nominal_duration,
                        "available_jobs": len(jobs),
                    }
                )
            return out

        return self.store.transact(body)

    def list_jobs(self, worker_id: str, category: Optional[str] = None) -> List[dict]:
        def body(txn: StoreTxn) -> List[dict]:
            worker = self._worker(txn, worker_id)
            available = routing.list_available(txn, worker, category)
            return [
                {
                    "id": job.id,
                    "title": job.title,
                    "instructions": job.instructions,
                    "category": job.category.value,
                    "reward": {"cents": job.reward, "currency": "EUR"},
                    "answer_fields": list(job.answer_fields),
                    "instances_available": remaining,
                }
                for job, remaining in available
            ]

        return self.store.transact(body)

    def claim(self, worker_id: str, job_id: str) -> Tuple[TaskInstance, List[dict]]:
        """Reserve the next instance; returns it with worker-safe unit views."""

        def body(txn: StoreTxn) -> Tuple[TaskInstance, List[dict]]:
            worker = self._worker(txn, worker_id)
            record = txn.get("jobs", job_id)
            if record is None:
                raise UnknownJob(job_id)
            job = Job.from_json(record)
            instance = routing.claim_next(
                txn, worker, job, self.rng, self.clock(), self.policy
            )
            units = [
                Unit.from_json(txn.get("units", unit_id)).worker_view()
                for unit_id in instance.unit_ids
            ]
            return instance, units

        return self.store.transact(body)

    def submit(
        self,
        worker_id: str,
        instance_id: str,
        answers: Mapping[str, Mapping],
        context: str = "unspecified",
    ) -> routing.SubmitResult:
        def body(txn: StoreTxn) -> routing.SubmitResult:
            worker = self._worker(txn, worker_id)
            return routing.submit_instance(
                txn, worker, instance_id, answers, context, self.clock(), self.policy
            )

        return self.store.transact(body)

    def expire_reservations(self, now: Optional[datetime] = None) -> int:
        when = now or self.clock()
        return self.store.transact(
            lambda txn: routing.expire_reservations(txn, when, self.policy)
        )

    # -- rewards and ledger ------------------------------------------------

    def upsert_reward(
        self, reward_id: str, title: str, price: int, venue: str, codes: Sequence[str]
    ) -> ledger.RewardItem:
        if len(set(codes)) != len(codes):
            raise ValidationError("duplicate codes in pool")

        def body(txn: StoreTxn) -> ledger.RewardItem:
            existing = txn.get("rewards", reward_id)
            issued = {
                value["code"]
                for _, value in txn.list("coupons")
                if value["reward_item_id"] == reward_id
            }
            pool = tuple(c for c in codes if c not in issued)
            item = ledger.RewardItem(
                id=reward_id, title=title, price=price, venue=venue, codes=pool
            )
            txn.put("rewards", reward_id, item.to_json())
            return item

        return self.store.transact(body)

    def rewards_catalog(self) -> List[dict]:
        return [
            ledger.RewardItem.from_json(value).catalog_view()
            for _, value in self.store.list("rewards")
        ]

    def purchase(self, worker_id: str, reward_id: str) -> ledger.Coupon:
        return self.store.transact(
            lambda txn: ledger.purchase_coupon(txn, worker_id, reward_id, self.clock())
        )

    def balance(self, worker_id: str) -> int:
        return self.store.transact(lambda txn: ledger.balance(txn, worker_id))

    def transactions(self, worker_id: str) -> List[ledger.Transaction]:
        return self.store.transact(
            lambda txn: sorted(
                ledger.transactions_for(txn, worker_id),
                key=lambda t: (t.created_at, t.id),
            )
        )
