"""Agreement and timing statistics over collected judgments.

fleiss_kappa follows the classic definition: per-subject agreement
P_i = (sum_j n_ij^2 - n) / (n (n - 1)), chance agreement P_e = sum_j p_j^2
over category proportions, kappa = (P_bar - P_e) / (1 - P_e), with the
large-sample standard error

    SE^2 = 2 / (N n (n-1)) * (P_e - (2n-3) P_e^2 + 2 (n-2) sum_j p_j^3)
           / (1 - P_e)^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .model import CrowdCafeError, Judgment, judgment_duration

import numpy as np

__all__ = [
    "FieldNotList",
    "KappaResult",
    "RaggedMatrix",
    "RatingMatrix",
    "TooFewRaters",
    "compliance_rate",
    "context_distribution",
    "execution_stats",
    "fleiss_kappa",
    "rating_matrix",
]


class RaggedMatrix(CrowdCafeError):
    code = "ragged_matrix"


class TooFewRaters(CrowdCafeError):
    code = "too_few_raters"


class FieldNotList(CrowdCafeError):
    code = "field_not_list"


@dataclass(frozen=True)
class RatingMatrix:
    """Subjects x categories tally with a constant rater count per subject."""

    counts: Tuple[Tuple[int, ...], ...]
    n_raters: int

    @property
    def n_subjects(self) -> int:
        return len(self.counts)

    @property
    def n_categories(self) -> int:
        return len(self.counts[0]) if self.counts else 0

    def __post_init__(self):
        if self.n_raters < 2:
            raise TooFewRaters(f"need >= 2 raters per subject, got {self.n_raters}")
        if not self.counts:
            raise RaggedMatrix("matrix has no subjects")
        width = len(self.counts[0])
        if width < 2:
            raise RaggedMatrix("matrix needs >= 2 categories")
        for row in self.counts:
            if len(row) != width:
                raise RaggedMatrix("rows have differing category counts")
            if sum(row) != self.n_raters:
                raise RaggedMatrix(
                    f"row sums {sum(row)} != rater count {self.n_raters}"
                )


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    standard_error: float
    p_bar: float
    p_e: float
    ci95: Tuple[float, float]
    p_value: float

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "standard_error": self.standard_error,
            "p_bar": self.p_bar,
            "p_e": self.p_e,
            "ci95": list(self.ci95),
            "p_value": self.p_value,
        }


def fleiss_kappa(matrix: RatingMatrix) -> KappaResult:
    """Chance-corrected agreement for a fixed rater count per subject."""
    counts = np.asarray(matrix.counts, dtype=float)
    n = matrix.n_raters
    big_n = matrix.n_subjects

    p_i = (np.sum(counts**2, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_i))
    p_j = np.sum(counts, axis=0) / (big_n * n)
    p_e = float(np.sum(p_j**2))

    if math.isclose(p_e, 1.0):
        kappa = 1.0 if math.isclose(p_bar, 1.0) else 0.0
        return KappaResult(kappa, 0.0, p_bar, p_e, (kappa, kappa), 0.0)

    kappa = (p_bar - p_e) / (1 - p_e)
    var = (
        2.0
        / (big_n * n * (n - 1))
        * (p_e - (2 * n - 3) * p_e**2 + 2 * (n - 2) * float(np.sum(p_j**3)))
        / (1 - p_e) ** 2
    )
    se = math.sqrt(max(var, 0.0))
    ci = (kappa - 1.96 * se, kappa + 1.96 * se)
    if se > 0:
        z = kappa / se
        p_value = math.erfc(abs(z) / math.sqrt(2))
    else:
        p_value = 0.0
    return KappaResult(kappa, se, p_bar, p_e, ci, p_value)


def rating_matrix(
    ratings_by_subject: Mapping[str, Sequence[Tuple[object, str]]],
    n_raters: int,
    categories: Optional[Sequence[str]] = None,
) -> RatingMatrix:
    """Build the tally from per-subject (timestamp, category) ratings.

    Subjects with fewer than n_raters ratings are dropped; subjects with
    more are downsampled to the n_raters earliest by timestamp.
    """
    if categories is None:
        labels = sorted(
            {cat for ratings in ratings_by_subject.values() for _, cat in ratings}
        )
    else:
        labels = list(categories)
    index = {label: i for i, label in enumerate(labels)}
    rows = []
    for subject in sorted(ratings_by_subject):
        ratings = sorted(ratings_by_subject[subject], key=lambda pair: pair[0])
        if len(ratings) < n_raters:
            continue
        row = [0] * len(labels)
        for _, category in ratings[:n_raters]:
            row[index[category]] += 1
        rows.append(tuple(row))
    return RatingMatrix(tuple(rows), n_raters)


def execution_stats(durations: Sequence[float]) -> Dict[str, Optional[float]]:
    """count, arithmetic mean, midpoint median, sample (n-1) stddev.

    Empty input yields count 0 with the other fields None; a single
    sample has an undefined stddev (None).
    """
    for d in durations:
        if d < 0:
            raise CrowdCafeError(f"negative duration: {d}")
    count = len(durations)
    if count == 0:
        return {"count": 0, "mean": None, "median": None, "stddev": None}
    data = np.asarray(durations, dtype=float)
    stddev = float(np.std(data, ddof=1)) if count > 1 else None
    return {
        "count": count,
        "mean": float(np.mean(data)),
        "median": float(np.median(data)),
        "stddev": stddev,
    }


def instance_durations(judgments: Sequence[Judgment]) -> List[float]:
    """One duration per submitted instance (not per judgment)."""
    seen: Dict[str, float] = {}
    for j in judgments:
        seen.setdefault(j.instance_id, judgment_duration(j))
    return list(seen.values())


def context_distribution(judgments: Sequence[Judgment]) -> Dict[str, object]:
    """Unspecified share over all judgments; labeled percentages over the rest."""
    total = len(judgments)
    if total == 0:
        return {"unspecified_pct": 0.0, "by_context": {}}
    unspecified = sum(1 for j in judgments if j.context == "unspecified")
    specified = total - unspecified
    by_context: Dict[str, float] = {}
    if specified:
        tally: Dict[str, int] = {}
        for j in judgments:
            if j.context != "unspecified":
                tally[j.context] = tally.get(j.context, 0) + 1
        by_context = {
            label: 100.0 * count / specified for label, count in sorted(tally.items())
        }
    return {
        "unspecified_pct": 100.0 * unspecified / total,
        "by_context": by_context,
    }


def compliance_rate(
    judgments: Sequence[Judgment], field: str, min_items: int = 3
) -> float:
    """Fraction of judgments whose list-valued field has >= min_items entries."""
    if not judgments:
        return 0.0
    passing = 0
    for j in judgments:
        value = j.values.get(field)
        if not isinstance(value, list):
            raise FieldNotList(f"field {field!r} is not list-valued in {j.id}")
        if len(value) >= min_items:
            passing += 1
    return passing / len(judgments)
