"""Task visibility, reservation, gold injection, and submission.

All operations here run against a StoreTxn and are meant to be wrapped in
Store.transact by the engine, which makes claim/submit linearizable per
job: conflicting reservations or counter updates abort and retry.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .model import (
    CrowdCafeError,
    InstanceState,
    Job,
    JobStatus,
    Judgment,
    PreselectionKind,
    TaskInstance,
    Unit,
    UnitStatus,
    Worker,
)
from .quality import (
    GoldOutcome,
    MissingAnswerField,
    WorkerQualityState,
    aggregate_unit,
    apply_mistake_limit,
    evaluate_gold,
    gold_injection_probability,
)
from . import ledger
from .storage import StoreTxn

__all__ = [
    "AlreadyReserved",
    "NotEligible",
    "NotReserver",
    "NothingAvailable",
    "ReservationExpired",
    "ReservationPolicy",
    "SubmitResult",
    "claim_next",
    "eligible",
    "expire_reservations",
    "list_available",
    "submit_instance",
    "worker_history",
]


class NothingAvailable(CrowdCafeError):
    code = "nothing_available"


class AlreadyReserved(CrowdCafeError):
    code = "already_reserved"


class NotEligible(CrowdCafeError):
    code = "not_eligible"


class NotReserver(CrowdCafeError):
    code = "not_reserver"


class ReservationExpired(CrowdCafeError):
    code = "reservation_expired"


@dataclass(frozen=True)
class ReservationPolicy:
    """How long a claimed instance stays reserved before its units return."""

    ttl: float = 600.0  # seconds

    def __post_init__(self):
        if self.ttl <= 0:
            raise ValueError("reservation ttl must be > 0")

    def deadline(self, reserved_at: datetime) -> datetime:
        return reserved_at + timedelta(seconds=self.ttl)


# ---------------------------------------------------------------------------
# Visibility


def eligible(worker: Worker, job: Job, history: Set[str]) -> bool:
    """May this worker see this job?  Preselection rules AND together."""
    if job.status is not JobStatus.PUBLISHED:
        return False
    if job.id in worker.banned_jobs:
        return False
    for rule in job.preselection:
        worked = rule.job_id in history
        if rule.kind is PreselectionKind.WORKED_ON and not worked:
            return False
        if rule.kind is PreselectionKind.DID_NOT_WORK_ON and worked:
            return False
    return True


def worker_history(txn: StoreTxn, worker_id: str) -> Set[str]:
    """Ids of jobs this worker has judged in at least once."""
    unit_jobs = {key: value["job_id"] for key, value in txn.list("units")}
    history = set()
    for key, value in txn.list("judgments"):
        if value["worker_id"] == worker_id:
            job_id = unit_jobs.get(value["unit_id"])
            if job_id:
                history.add(job_id)
    return history


def _job_units(txn: StoreTxn, job_id: str) -> List[Unit]:
    # insertion order of the units collection is creation order
    return [
        Unit.from_json(value)
        for _, value in txn.list("units")
        if value["job_id"] == job_id
    ]


def _judged_unit_ids(txn: StoreTxn, worker_id: str) -> Set[str]:
    return {
        value["unit_id"]
        for _, value in txn.list("judgments")
        if value["worker_id"] == worker_id
    }


def _judgment_counts(txn: StoreTxn, job_unit_ids: Set[str]) -> Dict[str, int]:
    counts = {unit_id: 0 for unit_id in job_unit_ids}
    for _, value in txn.list("judgments"):
        if value["unit_id"] in counts and not value.get("flagged"):
            counts[value["unit_id"]] += 1
    return counts


def _remaining_instances(txn: StoreTxn, worker: Worker, job: Job) -> int:
    units = _job_units(txn, job.id)
    judged = _judged_unit_ids(txn, worker.id)
    open_units = [
        u for u in units if not u.is_gold and not u.status.closed and u.id not in judged
    ]
    if not open_units:
        return 0
    return -(-len(open_units) // job.batch_size)  # ceil


def list_available(
    txn: StoreTxn, worker: Worker, category: Optional[str] = None
) -> List[Tuple[Job, int]]:
    """Published jobs the worker may claim, with remaining instance counts."""
    history = worker_history(txn, worker.id)
    results = []
    for _, record in txn.list("jobs"):
        job = Job.from_json(record)
        if category is not None and job.category.value != category:
            continue
        if not eligible(worker, job, history):
            continue
        remaining = _remaining_instances(txn, worker, job)
        if remaining > 0:
            results.append((job, remaining))
    return results


# ---------------------------------------------------------------------------
# Claiming


def _live_reservation(
    txn: StoreTxn, worker_id: str, job_id: str, now: datetime, policy: ReservationPolicy
) -> Optional[TaskInstance]:
    for _, value in txn.list("instances"):
        if value["worker_id"] != worker_id or value["job_id"] != job_id:
            continue
        instance = TaskInstance.from_json(value)
        if instance.state is not InstanceState.RESERVED:
            continue
        if policy.deadline(instance.reserved_at) < now:
            # lazily expire so an abandoned session never blocks a new claim
            txn.put("instances", instance.id, {**value, "state": "expired"})
            continue
        return instance
    return None


def quality_state(txn: StoreTxn, worker_id: str, job_id: str) -> WorkerQualityState:
    record = txn.get("quality", f"{worker_id}|{job_id}")
    if record is None:
        return WorkerQualityState(worker_id=worker_id, job_id=job_id)
    return WorkerQualityState.from_json(record)


def claim_next(
    txn: StoreTxn,
    worker: Worker,
    job: Job,
    rng: random.Random,
    now: datetime,
    policy: ReservationPolicy,
) -> TaskInstance:
    """Reserve the worker's next instance, possibly injecting one gold unit.

    Unit selection prefers units with the fewest countable judgments
    (ties by creation order); the gold slot and the injected gold unit
    are chosen uniformly with the caller's rng, so a seeded rng makes the
    composition deterministic.
    """
    if not eligible(worker, job, worker_history(txn, worker.id)):
        raise NotEligible(f"worker {worker.id} may not work on job {job.id}")
    if _live_reservation(txn, worker.id, job.id, now, policy) is not None:
        raise AlreadyReserved(f"worker {worker.id} already holds an instance of {job.id}")

    units = _job_units(txn, job.id)
    judged = _judged_unit_ids(txn, worker.id)
    candidates = [
        (index, unit)
        for index, unit in enumerate(units)
        if not unit.is_gold and not unit.status.closed and unit.id not in judged
    ]
    if not candidates:
        raise NothingAvailable(f"no units left for worker {worker.id} in job {job.id}")
    counts = _judgment_counts(txn, {unit.id for _, unit in candidates})
    candidates.sort(key=lambda pair: (counts[pair[1].id], pair[0]))
    selected = [unit.id for _, unit in candidates[: job.batch_size]]

    state = quality_state(txn, worker.id, job.id)
    p = gold_injection_probability(state)
    if rng.random() < p:
        gold_pool = [
            unit.id for unit in units if unit.is_gold and unit.id not in judged
        ]
        if gold_pool:
            slot = rng.randrange(len(selected))
            selected[slot] = gold_pool[rng.randrange(len(gold_pool))]

    instance = TaskInstance(
        id=txn.next_id("instance"),
        job_id=job.id,
        worker_id=worker.id,
        unit_ids=tuple(selected),
        reserved_at=now,
    )
    txn.put("instances", instance.id, instance.to_json())
    return instance


# ---------------------------------------------------------------------------
# Submission


@dataclass(frozen=True)
class SubmitResult:
    instance: TaskInstance
    judgments: Tuple[Judgment, ...]
    banned: bool
    credited: int  # euro-cents actually credited (0 when banned)
    finalized_units: Tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance.id,
            "units": [
                {"unit_id": j.unit_id, "accepted": True} for j in self.judgments
            ],
            "banned": self.banned,
            "credited": {"cents": self.credited, "currency": "EUR"},
        }


def submit_instance(
    txn: StoreTxn,
    worker: Worker,
    instance_id: str,
    answers: Mapping[str, Mapping],
    context: str,
    now: datetime,
    policy: ReservationPolicy,
) -> SubmitResult:
    """Record one judgment per unit, grade gold, ban, finalize, credit.

    All-or-nothing: any missing field rejects the whole submission before
    anything is recorded.
    """
    record = txn.get("instances", instance_id)
    if record is None:
        raise ledger.UnknownInstance(f"no such instance: {instance_id}")
    instance = TaskInstance.from_json(record)
    if instance.worker_id != worker.id:
        raise NotReserver(f"instance {instance_id} is not reserved by {worker.id}")
    if instance.state is InstanceState.EXPIRED or (
        instance.state is InstanceState.RESERVED
        and policy.deadline(instance.reserved_at) < now
    ):
        if instance.state is InstanceState.RESERVED:
            txn.put("instances", instance.id, {**record, "state": "expired"})
        raise ReservationExpired(f"reservation on {instance_id} has expired")
    if instance.state is not InstanceState.RESERVED:
        raise NotReserver(f"instance {instance_id} was already submitted")

    job = Job.from_json(txn.get("jobs", instance.job_id))

    # validate before any write: every unit answered, every field present
    for unit_id in instance.unit_ids:
        unit_answers = answers.get(unit_id)
        if unit_answers is None:
            raise MissingAnswerField(f"{unit_id}: no answers given")
        for name in job.answer_fields:
            if name not in unit_answers:
                raise MissingAnswerField(f"{unit_id}: {name}")

    state = quality_state(txn, worker.id, job.id)
    judgments: List[Judgment] = []
    for unit_id in instance.unit_ids:
        unit = Unit.from_json(txn.get("units", unit_id))
        judgment = Judgment(
            id=txn.next_id("judgment"),
            unit_id=unit_id,
            worker_id=worker.id,
            instance_id=instance.id,
            values=dict(answers[unit_id]),
            context=context,
            started_at=instance.reserved_at,
            submitted_at=now,
        )
        if unit.is_gold:
            outcome = evaluate_gold(judgment.values, unit.gold, job.similarity)
            judgment = dataclasses.replace(judgment, gold_outcome=outcome.value)
            state = state.record(outcome)
        key = f"{worker.id}|{unit_id}"
        if txn.get("judgments", key) is not None:
            raise CrowdCafeError(f"worker {worker.id} already judged unit {unit_id}")
        txn.put("judgments", key, judgment.to_json())
        judgments.append(judgment)

    was_banned = state.banned
    state = apply_mistake_limit(state, job.mistake_limit)
    txn.put("quality", f"{worker.id}|{job.id}", state.to_json())
    newly_banned = state.banned and not was_banned
    if newly_banned:
        worker_record = txn.get("workers", worker.id) or Worker(
            worker.id, worker.display_name
        ).to_json()
        banned = sorted(set(worker_record.get("banned_jobs", [])) | {job.id})
        txn.put("workers", worker.id, {**worker_record, "banned_jobs": banned})
        _flag_worker_judgments(txn, worker.id, job.id)

    finalized = []
    if not job.survey:
        for unit_id in instance.unit_ids:
            unit = Unit.from_json(txn.get("units", unit_id))
            if unit.is_gold or unit.status.closed:
                continue
            countable = _countable_judgments(txn, unit_id)
            if len(countable) < job.min_judgments:
                continue
            result = aggregate_unit(
                countable, job.answer_fields, job.similarity, job.min_judgments
            )
            if result.state == "agreed":
                status = UnitStatus.finalized(result.value)
            else:
                status = UnitStatus.no_agreement()
            txn.put("units", unit_id, {**unit.to_json(), "status": status.to_json()})
            finalized.append(unit_id)

    credited = 0
    if not newly_banned:
        ledger.credit_judgment(txn, worker.id, job.id, instance.id, job.reward, now)
        credited = job.reward

    submitted = TaskInstance(
        id=instance.id,
        job_id=instance.job_id,
        worker_id=instance.worker_id,
        unit_ids=instance.unit_ids,
        reserved_at=instance.reserved_at,
        state=InstanceState.SUBMITTED,
    )
    txn.put("instances", instance.id, submitted.to_json())
    return SubmitResult(
        instance=submitted,
        judgments=tuple(judgments),
        banned=state.banned,
        credited=credited,
        finalized_units=tuple(finalized),
    )


def _countable_judgments(txn: StoreTxn, unit_id: str) -> List[Judgment]:
    """Judgments that count toward agreement: same unit, not flagged."""
    return [
        Judgment.from_json(value)
        for _, value in txn.list("judgments")
        if value["unit_id"] == unit_id and not value.get("flagged")
    ]


def _flag_worker_judgments(txn: StoreTxn, worker_id: str, job_id: str) -> None:
    unit_jobs = {key: value["job_id"] for key, value in txn.list("units")}
    for key, value in txn.list("judgments"):
        if value["worker_id"] != worker_id or value.get("flagged"):
            continue
        if unit_jobs.get(value["unit_id"]) == job_id:
            txn.put("judgments", key, {**value, "flagged": True})


def expire_reservations(
    txn: StoreTxn, now: datetime, policy: ReservationPolicy
) -> int:
    """Expire stale reservations, returning their units to the pool."""
    expired = 0
    for key, value in txn.list("instances"):
        if value["state"] != "reserved":
            continue
        instance = TaskInstance.from_json(value)
        if policy.deadline(instance.reserved_at) < now:
            txn.put("instances", key, {**value, "state": "expired"})
            expired += 1
    return expired
