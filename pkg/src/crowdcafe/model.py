"""Shared domain vocabulary: jobs, units, instances, judgments, workers.

All values here are immutable after construction; mutation goes through
storage transactions.  Every type has a canonical JSON form (snake_case
keys, RFC 3339 UTC timestamps, money as integer euro-cents tagged with
"currency": "EUR") which is both the service wire format and the CLI
export format.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

__all__ = [
    "AlreadyCredited",
    "Category",
    "CrowdCafeError",
    "ContextLabel",
    "CONTEXT_LABELS",
    "DanglingPreselectionRef",
    "InstanceState",
    "InvalidBatchSize",
    "Job",
    "JobStatus",
    "Judgment",
    "MissingField",
    "NegativeDuration",
    "PreselectionKind",
    "PreselectionRule",
    "SimilarityRule",
    "SimilaritySpec",
    "TaskInstance",
    "Unit",
    "UnitStatus",
    "UnknownCategory",
    "ValidationError",
    "Value",
    "Worker",
    "format_cents",
    "judgment_duration",
    "money_from_json",
    "money_to_json",
    "parse_rfc3339",
    "to_rfc3339",
    "validate_job",
]

# One answer value: free text, a number, or a list of texts (e.g. tags).
Value = Union[str, int, float, list]


class CrowdCafeError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def to_json(self) -> dict:
        return {"error": self.code, "detail": str(self)}


class ValidationError(CrowdCafeError):
    code = "validation_error"


class MissingField(ValidationError):
    code = "missing_field"

    def __init__(self, name: str):
        super().__init__(f"missing required field: {name}")
        self.name = name


class InvalidBatchSize(ValidationError):
    code = "invalid_batch_size"


class UnknownCategory(ValidationError):
    code = "unknown_category"

    def __init__(self, label: str):
        super().__init__(f"unknown category: {label!r}")
        self.label = label


class DanglingPreselectionRef(ValidationError):
    code = "dangling_preselection_ref"

    def __init__(self, job_id: str):
        super().__init__(f"preselection references unknown job: {job_id}")
        self.job_id = job_id


class NegativeDuration(CrowdCafeError):
    code = "negative_duration"


# ---------------------------------------------------------------------------
# Timestamps and money


def to_rfc3339(ts: datetime) -> str:
    """Render a timestamp as an RFC 3339 UTC string."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    return ts.isoformat().replace("+00:00", "Z")


def parse_rfc3339(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def money_to_json(cents: int) -> dict:
    return {"cents": int(cents), "currency": "EUR"}


def money_from_json(obj: Mapping) -> int:
    if obj.get("currency", "EUR") != "EUR":
        raise ValidationError(f"unsupported currency: {obj.get('currency')!r}")
    return int(obj["cents"])


def format_cents(cents: int) -> str:
    """Integer euro-cents rendered as a decimal euro amount ("0.03")."""
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100}.{cents % 100:02d}"


# ---------------------------------------------------------------------------
# Categories and contexts


class Category(str, Enum):
    """Task category by nominal completion time."""

    ESPRESSO = "espresso"
    CAPPUCCINO = "cappuccino"
    WINE = "wine"

    @property
    def nominal_duration(self) -> int:
        """Advisory completion time in seconds."""
        return _NOMINAL_DURATION[self]

    @classmethod
    def parse(cls, label: str) -> "Category":
        try:
            return cls(label)
        except ValueError:
            raise UnknownCategory(label) from None


_NOMINAL_DURATION = {
    Category.ESPRESSO: 10,
    Category.CAPPUCCINO: 120,
    Category.WINE: 300,
}

# Where the worker says they are while judging; fixed vocabulary.
CONTEXT_LABELS = frozenset(
    {"workplace", "outside", "bus", "home", "train", "walking", "unspecified"}
)
ContextLabel = str


# ---------------------------------------------------------------------------
# Similarity rules


@dataclass(frozen=True)
class SimilarityRule:
    """One per-field comparison rule.

    kind is one of "exact", "case_insensitive", "numeric_tolerance" (with
    epsilon >= 0) or "set_jaccard" (with threshold in (0, 1]).
    """

    kind: str
    epsilon: float = 0.0
    threshold: float = 1.0

    KINDS = ("exact", "case_insensitive", "numeric_tolerance", "set_jaccard")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown similarity rule: {self.kind!r}")
        if self.kind == "numeric_tolerance" and self.epsilon < 0:
            raise ValidationError("numeric_tolerance epsilon must be >= 0")
        if self.kind == "set_jaccard" and not (0 < self.threshold <= 1):
            raise ValidationError("set_jaccard threshold must be in (0, 1]")

    def to_json(self) -> dict:
        obj: dict = {"rule": self.kind}
        if self.kind == "numeric_tolerance":
            obj["epsilon"] = self.epsilon
        if self.kind == "set_jaccard":
            obj["threshold"] = self.threshold
        return obj

    @classmethod
    def from_json(cls, obj: Mapping) -> "SimilarityRule":
        return cls(
            kind=obj["rule"],
            epsilon=float(obj.get("epsilon", 0.0)),
            threshold=float(obj.get("threshold", 1.0)),
        )


EXACT = SimilarityRule("exact")


@dataclass(frozen=True)
class SimilaritySpec:
    """Per-field similarity rules; unlisted fields fall back to exact equality."""

    rules: Mapping[str, SimilarityRule] = field(default_factory=dict)

    def rule_for(self, field_name: str) -> SimilarityRule:
        return self.rules.get(field_name, EXACT)

    def to_json(self) -> dict:
        return {name: rule.to_json() for name, rule in sorted(self.rules.items())}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SimilaritySpec":
        return cls({name: SimilarityRule.from_json(r) for name, r in obj.items()})


# ---------------------------------------------------------------------------
# Jobs


class JobStatus(str, Enum):
    DRAFT = "draft"
    PUBLISHED = "published"
    CLOSED = "closed"


class PreselectionKind(str, Enum):
    WORKED_ON = "worked_on"
    DID_NOT_WORK_ON = "did_not_work_on"


@dataclass(frozen=True)
class PreselectionRule:
    kind: PreselectionKind
    job_id: str

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "job_id": self.job_id}

    @classmethod
    def from_json(cls, obj: Mapping) -> "PreselectionRule":
        return cls(PreselectionKind(obj["kind"]), obj["job_id"])


@dataclass(frozen=True)
class Job:
    """A published crowd job.

    answer_fields names the form fields a worker must fill for every unit;
    gold answers and similarity rules are keyed by these names.  reward is
    integer euro-cents paid per completed instance.
    """

    id: str
    title: str
    instructions: str
    category: Category
    batch_size: int
    answer_fields: tuple = ()
    min_judgments: int = 3
    reward: int = 0
    ui_template_ref: str = ""
    preselection: tuple = ()
    similarity: SimilaritySpec = field(default_factory=SimilaritySpec)
    mistake_limit: int = 0
    status: JobStatus = JobStatus.DRAFT
    owner_id: str = ""
    survey: bool = False

    def with_status(self, status: JobStatus) -> "Job":
        return replace(self, status=status)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "instructions": self.instructions,
            "category": self.category.value,
            "batch_size": self.batch_size,
            "answer_fields": list(self.answer_fields),
            "min_judgments": self.min_judgments,
            "reward": money_to_json(self.reward),
            "ui_template_ref": self.ui_template_ref,
            "preselection": [r.to_json() for r in self.preselection],
            "similarity": self.similarity.to_json(),
            "mistake_limit": self.mistake_limit,
            "status": self.status.value,
            "owner_id": self.owner_id,
            "survey": self.survey,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Job":
        return cls(
            id=obj["id"],
            title=obj["title"],
            instructions=obj["instructions"],
            category=Category.parse(obj["category"]),
            batch_size=int(obj["batch_size"]),
            answer_fields=tuple(obj.get("answer_fields", ())),
            min_judgments=int(obj.get("min_judgments", 3)),
            reward=money_from_json(obj["reward"]),
            ui_template_ref=obj.get("ui_template_ref", ""),
            preselection=tuple(
                PreselectionRule.from_json(r) for r in obj.get("preselection", ())
            ),
            similarity=SimilaritySpec.from_json(obj.get("similarity", {})),
            mistake_limit=int(obj.get("mistake_limit", 0)),
            status=JobStatus(obj.get("status", "draft")),
            owner_id=obj.get("owner_id", ""),
            survey=bool(obj.get("survey", False)),
        )


# ---------------------------------------------------------------------------
# Units


class UnitState(str, Enum):
    OPEN = "open"
    FINALIZED = "finalized"
    NO_AGREEMENT = "no_agreement"


@dataclass(frozen=True)
class UnitStatus:
    state: UnitState
    value: Optional[Mapping[str, Value]] = None  # set iff finalized

    @classmethod
    def open(cls) -> "UnitStatus":
        return cls(UnitState.OPEN)

    @classmethod
    def finalized(cls, value: Mapping[str, Value]) -> "UnitStatus":
        return cls(UnitState.FINALIZED, dict(value))

    @classmethod
    def no_agreement(cls) -> "UnitStatus":
        return cls(UnitState.NO_AGREEMENT)

    @property
    def closed(self) -> bool:
        return self.state is not UnitState.OPEN

    def to_json(self) -> dict:
        obj: dict = {"state": self.state.value}
        if self.value is not None:
            obj["value"] = dict(self.value)
        return obj

    @classmethod
    def from_json(cls, obj: Mapping) -> "UnitStatus":
        return cls(UnitState(obj["state"]), obj.get("value"))


@dataclass(frozen=True)
class Unit:
    """One atomic data item to be judged; gold units carry a known answer."""

    id: str
    job_id: str
    payload: Mapping[str, str] = field(default_factory=dict)
    gold: Optional[Mapping[str, Value]] = None
    status: UnitStatus = field(default_factory=UnitStatus.open)

    @property
    def is_gold(self) -> bool:
        return self.gold is not None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "job_id": self.job_id,
            "payload": dict(self.payload),
            "gold": dict(self.gold) if self.gold is not None else None,
            "status": self.status.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Unit":
        return cls(
            id=obj["id"],
            job_id=obj["job_id"],
            payload=dict(obj.get("payload", {})),
            gold=dict(obj["gold"]) if obj.get("gold") is not None else None,
            status=UnitStatus.from_json(obj.get("status", {"state": "open"})),
        )

    def worker_view(self) -> dict:
        """JSON form safe to send to workers: no gold flag, no gold answer."""
        return {"id": self.id, "job_id": self.job_id, "payload": dict(self.payload)}


# ---------------------------------------------------------------------------
# Task instances


class InstanceState(str, Enum):
    RESERVED = "reserved"
    SUBMITTED = "submitted"
    EXPIRED = "expired"


@dataclass(frozen=True)
class TaskInstance:
    """A batch of units reserved by one worker for one sitting."""

    id: str
    job_id: str
    worker_id: str
    unit_ids: tuple
    reserved_at: datetime
    state: InstanceState = InstanceState.RESERVED

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "job_id": self.job_id,
            "worker_id": self.worker_id,
            "unit_ids": list(self.unit_ids),
            "reserved_at": to_rfc3339(self.reserved_at),
            "state": self.state.value,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TaskInstance":
        return cls(
            id=obj["id"],
            job_id=obj["job_id"],
            worker_id=obj["worker_id"],
            unit_ids=tuple(obj["unit_ids"]),
            reserved_at=parse_rfc3339(obj["reserved_at"]),
            state=InstanceState(obj.get("state", "reserved")),
        )


# ---------------------------------------------------------------------------
# Judgments


@dataclass(frozen=True)
class Judgment:
    """One worker's answer for one unit, with timing and context."""

    id: str
    unit_id: str
    worker_id: str
    instance_id: str
    values: Mapping[str, Value]
    context: ContextLabel = "unspecified"
    started_at: datetime = None  # type: ignore[assignment]
    submitted_at: datetime = None  # type: ignore[assignment]
    gold_outcome: Optional[str] = None  # "correct" | "incorrect"
    flagged: bool = False  # worker was later banned for the job

    def __post_init__(self):
        if self.context not in CONTEXT_LABELS:
            raise ValidationError(f"unknown context label: {self.context!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "unit_id": self.unit_id,
            "worker_id": self.worker_id,
            "instance_id": self.instance_id,
            "values": dict(self.values),
            "context": self.context,
            "started_at": to_rfc3339(self.started_at),
            "submitted_at": to_rfc3339(self.submitted_at),
            "gold_outcome": self.gold_outcome,
            "flagged": self.flagged,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Judgment":
        return cls(
            id=obj["id"],
            unit_id=obj["unit_id"],
            worker_id=obj["worker_id"],
            instance_id=obj["instance_id"],
            values=dict(obj["values"]),
            context=obj.get("context", "unspecified"),
            started_at=parse_rfc3339(obj["started_at"]),
            submitted_at=parse_rfc3339(obj["submitted_at"]),
            gold_outcome=obj.get("gold_outcome"),
            flagged=bool(obj.get("flagged", False)),
        )


def judgment_duration(j: Judgment) -> float:
    """Execution time in seconds; raises NegativeDuration on bad clocks."""
    delta = (j.submitted_at - j.started_at).total_seconds()
    if delta < 0:
        raise NegativeDuration(
            f"judgment {j.id} submitted before it started ({delta} s)"
        )
    return delta


# ---------------------------------------------------------------------------
# Workers


@dataclass(frozen=True)
class Worker:
    id: str
    display_name: str
    banned_jobs: frozenset = frozenset()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "banned_jobs": sorted(self.banned_jobs),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Worker":
        return cls(
            id=obj["id"],
            display_name=obj.get("display_name", obj["id"]),
            banned_jobs=frozenset(obj.get("banned_jobs", ())),
        )


# ---------------------------------------------------------------------------
# Job validation


class AlreadyCredited(CrowdCafeError):
    code = "already_credited"


_REQUIRED_JOB_FIELDS = ("id", "title", "instructions")


def validate_job(draft: Job, known_job_ids: Iterable[str] = ()) -> Job:
    """Check all Job invariants; returns the job unchanged when valid.

    known_job_ids is the set of already-persisted jobs that preselection
    rules may reference.
    """
    for name in _REQUIRED_JOB_FIELDS:
        if not getattr(draft, name):
            raise MissingField(name)
    if not isinstance(draft.category, Category):
        raise UnknownCategory(str(draft.category))
    if draft.batch_size < 1:
        raise InvalidBatchSize(f"batch_size must be >= 1, got {draft.batch_size}")
    if draft.min_judgments < 1:
        raise ValidationError("min_judgments must be >= 1")
    if draft.reward < 0:
        raise ValidationError("reward must be >= 0")
    if draft.mistake_limit < 0:
        raise ValidationError("mistake_limit must be >= 0")
    if not draft.ui_template_ref:
        raise MissingField("ui_template_ref")
    if not draft.answer_fields:
        raise MissingField("answer_fields")
    known = set(known_job_ids)
    for rule in draft.preselection:
        if rule.job_id not in known:
            raise DanglingPreselectionRef(rule.job_id)
    return draft
