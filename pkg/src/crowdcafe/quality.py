"""Quality control: gold injection probability, similarity, gold grading,
mistake limits, and agreement-based aggregation.

The injection probability follows

    p = (1 + n_incorrect) / (1 + n_incorrect + n_correct)

so a fresh worker always gets gold (p = 1) and reliable workers see it
less and less often.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from numbers import Real
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .model import (
    CrowdCafeError,
    Judgment,
    SimilarityRule,
    SimilaritySpec,
    Value,
)

__all__ = [
    "AggregationResult",
    "DuplicateWorker",
    "GoldOutcome",
    "KindMismatch",
    "MissingAnswerField",
    "MixedUnits",
    "WorkerQualityState",
    "aggregate_unit",
    "apply_mistake_limit",
    "evaluate_gold",
    "gold_injection_probability",
    "similar",
]


class KindMismatch(CrowdCafeError):
    code = "kind_mismatch"

    def __init__(self, rule: str, a: Value, b: Value):
        super().__init__(
            f"rule {rule!r} cannot compare {type(a).__name__} with {type(b).__name__}"
        )


class MissingAnswerField(CrowdCafeError):
    code = "missing_answer_field"

    def __init__(self, name: str):
        super().__init__(f"answer is missing gold field {name!r}")
        self.name = name


class MixedUnits(CrowdCafeError):
    code = "mixed_units"


class DuplicateWorker(CrowdCafeError):
    code = "duplicate_worker"


class GoldOutcome(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


@dataclass(frozen=True)
class WorkerQualityState:
    """Per-worker, per-job gold counters; counters only ever increase."""

    worker_id: str
    job_id: str
    n_incorrect: int = 0
    n_correct: int = 0
    banned: bool = False

    def record(self, outcome: GoldOutcome) -> "WorkerQualityState":
        if outcome is GoldOutcome.CORRECT:
            return replace(self, n_correct=self.n_correct + 1)
        return replace(self, n_incorrect=self.n_incorrect + 1)

    def to_json(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "job_id": self.job_id,
            "n_incorrect": self.n_incorrect,
            "n_correct": self.n_correct,
            "banned": self.banned,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "WorkerQualityState":
        return cls(
            worker_id=obj["worker_id"],
            job_id=obj["job_id"],
            n_incorrect=int(obj.get("n_incorrect", 0)),
            n_correct=int(obj.get("n_correct", 0)),
            banned=bool(obj.get("banned", False)),
        )


def gold_injection_probability(state: WorkerQualityState) -> float:
    """Probability of placing a gold unit in the worker's next instance."""
    if state.n_incorrect < 0 or state.n_correct < 0:
        raise ValueError("gold counters must be non-negative")
    return (1 + state.n_incorrect) / (1 + state.n_incorrect + state.n_correct)


# ---------------------------------------------------------------------------
# Similarity


def _as_number(value: Value) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise TypeError
    return float(value)


def _as_text_set(value: Value) -> frozenset:
    if isinstance(value, str):
        return frozenset({value.casefold()})
    if isinstance(value, (list, tuple, set, frozenset)):
        return frozenset(str(v).casefold() for v in value)
    raise TypeError


def similar(a: Value, b: Value, rule: SimilarityRule) -> bool:
    """Symmetric per-field similarity under one rule.

    set_jaccard compares case-folded element sets; empty vs empty counts
    as similar.
    """
    kind = rule.kind
    if kind == "exact":
        if type(a) is not type(b) and not (
            isinstance(a, Real) and isinstance(b, Real)
        ):
            return False
        return a == b
    if kind == "case_insensitive":
        if not (isinstance(a, str) and isinstance(b, str)):
            raise KindMismatch(kind, a, b)
        return a.casefold() == b.casefold()
    if kind == "numeric_tolerance":
        try:
            x, y = _as_number(a), _as_number(b)
        except TypeError:
            raise KindMismatch(kind, a, b) from None
        return abs(x - y) <= rule.epsilon
    if kind == "set_jaccard":
        try:
            sa, sb = _as_text_set(a), _as_text_set(b)
        except TypeError:
            raise KindMismatch(kind, a, b) from None
        if not sa and not sb:
            return True
        jaccard = len(sa & sb) / len(sa | sb)
        return jaccard >= rule.threshold
    raise KindMismatch(kind, a, b)


def values_similar(
    a: Mapping[str, Value],
    b: Mapping[str, Value],
    fields: Sequence[str],
    spec: SimilaritySpec,
) -> bool:
    """All-field similarity between two complete answers."""
    for name in fields:
        if name not in a or name not in b:
            return False
        if not similar(a[name], b[name], spec.rule_for(name)):
            return False
    return True


# ---------------------------------------------------------------------------
# Gold grading and mistake limits


def evaluate_gold(
    values: Mapping[str, Value],
    gold: Mapping[str, Value],
    spec: SimilaritySpec,
) -> GoldOutcome:
    """Grade an answer against a gold unit's known answer.

    Correct iff every gold field passes its similarity rule; a missing
    field is an error, not an incorrect judgment.
    """
    for name, expected in gold.items():
        if name not in values:
            raise MissingAnswerField(name)
        if not similar(values[name], expected, spec.rule_for(name)):
            return GoldOutcome.INCORRECT
    return GoldOutcome.CORRECT


def apply_mistake_limit(state: WorkerQualityState, limit: int) -> WorkerQualityState:
    """Ban the worker for this job once n_incorrect strictly exceeds limit.

    limit 0 (the default) bans on the first gold mistake.  Bans are
    permanent for the job; an already-banned state stays banned.
    """
    if state.banned or state.n_incorrect > limit:
        return replace(state, banned=True)
    return state


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class AggregationResult:
    """Outcome of aggregating one unit's judgments.

    state is "pending" below min_judgments, "agreed" when a strict-majority
    cluster of mutually similar judgments exists, else "no_agreement".
    """

    state: str  # "pending" | "agreed" | "no_agreement"
    count: int
    value: Optional[Dict[str, Value]] = None
    support: int = 0

    def to_json(self) -> dict:
        obj: dict = {"state": self.state, "count": self.count}
        if self.state == "agreed":
            obj["value"] = self.value
            obj["support"] = self.support
        return obj


def aggregate_unit(
    judgments: Sequence[Judgment],
    fields: Sequence[str],
    spec: SimilaritySpec,
    min_judgments: int,
) -> AggregationResult:
    """Cluster judgments by pairwise all-field similarity (single linkage).

    The largest cluster wins if it holds a strict majority; its canonical
    value is the earliest-submitted member's answers.  Ties and minority
    pluralities yield no_agreement.
    """
    if judgments:
        unit_ids = {j.unit_id for j in judgments}
        if len(unit_ids) > 1:
            raise MixedUnits(f"judgments span units {sorted(unit_ids)}")
        workers = [j.worker_id for j in judgments]
        if len(set(workers)) != len(workers):
            raise DuplicateWorker("multiple judgments from one worker")

    count = len(judgments)
    if count < min_judgments:
        return AggregationResult("pending", count)

    # Single-linkage clustering = connected components of the similarity graph.
    parent = list(range(count))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(count):
        for k in range(i + 1, count):
            if values_similar(judgments[i].values, judgments[k].values, fields, spec):
                ri, rk = find(i), find(k)
                if ri != rk:
                    parent[rk] = ri

    clusters: Dict[int, List[int]] = {}
    for i in range(count):
        clusters.setdefault(find(i), []).append(i)
    sizes = sorted((len(members) for members in clusters.values()), reverse=True)
    largest = max(clusters.values(), key=len)
    if sizes[0] * 2 <= count or (len(sizes) > 1 and sizes[1] == sizes[0]):
        return AggregationResult("no_agreement", count)

    canonical = min(largest, key=lambda i: (judgments[i].submitted_at, judgments[i].id))
    return AggregationResult(
        "agreed", count, value=dict(judgments[canonical].values), support=len(largest)
    )
