"""Append-only earnings ledger, reward catalog, and coupon issuance.

Balances are always derived by summing the worker's transaction log;
nothing stores a balance.  All operations take a StoreTxn and must run
inside Store.transact so concurrent purchases serialize.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import List, Mapping, Optional

from .model import (
    AlreadyCredited,
    CrowdCafeError,
    money_from_json,
    money_to_json,
    parse_rfc3339,
    to_rfc3339,
)
from .storage import StoreTxn

__all__ = [
    "Coupon",
    "InsufficientFunds",
    "RewardItem",
    "SoldOut",
    "Transaction",
    "UnknownInstance",
    "balance",
    "credit_judgment",
    "purchase_coupon",
    "transactions_for",
]


class InsufficientFunds(CrowdCafeError):
    code = "insufficient_funds"

    def __init__(self, balance_cents: int, price_cents: int):
        super().__init__(
            f"balance {balance_cents} cents is below price {price_cents} cents"
        )
        self.balance = balance_cents
        self.price = price_cents


class SoldOut(CrowdCafeError):
    code = "sold_out"


class UnknownInstance(CrowdCafeError):
    code = "unknown_instance"


@dataclass(frozen=True)
class Transaction:
    """One ledger entry; positive amounts are earnings, negative spendings."""

    id: str
    worker_id: str
    amount: int  # euro-cents
    kind: Mapping  # {"type": "judgment_credit"|"coupon_purchase"|"manual_adjustment", ...}
    created_at: datetime

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "worker_id": self.worker_id,
            "amount": money_to_json(self.amount),
            "kind": dict(self.kind),
            "created_at": to_rfc3339(self.created_at),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Transaction":
        return cls(
            id=obj["id"],
            worker_id=obj["worker_id"],
            amount=money_from_json(obj["amount"]),
            kind=dict(obj["kind"]),
            created_at=parse_rfc3339(obj["created_at"]),
        )


@dataclass(frozen=True)
class RewardItem:
    """A purchasable reward; codes is the pool of unissued single-use codes."""

    id: str
    title: str
    price: int  # euro-cents
    venue: str
    codes: tuple = ()

    @property
    def remaining(self) -> int:
        return len(self.codes)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "price": money_to_json(self.price),
            "venue": self.venue,
            "codes": list(self.codes),
        }

    def catalog_view(self) -> dict:
        # worker-facing view: never expose the unissued codes themselves
        return {
            "id": self.id,
            "title": self.title,
            "price": money_to_json(self.price),
            "venue": self.venue,
            "remaining": self.remaining,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "RewardItem":
        return cls(
            id=obj["id"],
            title=obj["title"],
            price=money_from_json(obj["price"]),
            venue=obj.get("venue", ""),
            codes=tuple(obj.get("codes", ())),
        )


@dataclass(frozen=True)
class Coupon:
    id: str
    worker_id: str
    reward_item_id: str
    code: str
    issued_at: datetime

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "worker_id": self.worker_id,
            "reward_item_id": self.reward_item_id,
            "code": self.code,
            "issued_at": to_rfc3339(self.issued_at),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Coupon":
        return cls(
            id=obj["id"],
            worker_id=obj["worker_id"],
            reward_item_id=obj["reward_item_id"],
            code=obj["code"],
            issued_at=parse_rfc3339(obj["issued_at"]),
        )


def transactions_for(txn: StoreTxn, worker_id: str) -> List[Transaction]:
    return [
        Transaction.from_json(value)
        for _, value in txn.list("transactions")
        if value["worker_id"] == worker_id
    ]


def balance(txn: StoreTxn, worker_id: str) -> int:
    """Sum of the worker's transaction log in euro-cents."""
    return sum(t.amount for t in transactions_for(txn, worker_id))


def credit_judgment(
    txn: StoreTxn,
    worker_id: str,
    job_id: str,
    instance_id: str,
    reward: int,
    now: datetime,
) -> Transaction:
    """Credit the per-instance reward; idempotent per instance."""
    for _, value in txn.list("transactions"):
        kind = value["kind"]
        if (
            kind.get("type") == "judgment_credit"
            and kind.get("instance_id") == instance_id
        ):
            raise AlreadyCredited(f"instance {instance_id} already credited")
    entry = Transaction(
        id=txn.next_id("txn"),
        worker_id=worker_id,
        amount=reward,
        kind={"type": "judgment_credit", "job_id": job_id, "instance_id": instance_id},
        created_at=now,
    )
    txn.put("transactions", entry.id, entry.to_json())
    return entry


def purchase_coupon(
    txn: StoreTxn, worker_id: str, reward_item_id: str, now: datetime
) -> Coupon:
    """Spend balance on one code from the pool; atomic with the debit."""
    record = txn.get("rewards", reward_item_id)
    if record is None:
        raise CrowdCafeError(f"unknown reward item: {reward_item_id}")
    item = RewardItem.from_json(record)
    if item.remaining == 0:
        raise SoldOut(f"reward {item.id} has no codes left")
    funds = balance(txn, worker_id)
    if funds < item.price:
        raise InsufficientFunds(funds, item.price)

    code, *rest = item.codes
    txn.put("rewards", item.id, {**item.to_json(), "codes": list(rest)})
    coupon = Coupon(
        id=txn.next_id("coupon"),
        worker_id=worker_id,
        reward_item_id=item.id,
        code=code,
        issued_at=now,
    )
    debit = Transaction(
        id=txn.next_id("txn"),
        worker_id=worker_id,
        amount=-item.price,
        kind={"type": "coupon_purchase", "coupon_id": coupon.id},
        created_at=now,
    )
    txn.put("transactions", debit.id, debit.to_json())
    txn.put("coupons", coupon.id, coupon.to_json())
    return coupon
