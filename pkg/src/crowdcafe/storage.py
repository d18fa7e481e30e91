"""Embedded transactional store for all mutable platform state.

Records are JSON-able dicts grouped into named collections.  Transactions
use optimistic concurrency: reads are validated against record versions at
commit time under a short critical section, so committed transactions are
serializable without holding a lock during user code.  Conflicted
transactions are retried with jittered backoff.

Durability: the on-disk mode appends each committed transaction as a single
JSON line to a write-ahead log.  One line per transaction makes commits
atomic under crash; a torn trailing line is ignored on replay.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, TypeVar

from .model import CrowdCafeError

__all__ = [
    "Conflict",
    "RetriesExhausted",
    "StorageUnavailable",
    "Store",
    "StoreTxn",
]

T = TypeVar("T")


class Conflict(CrowdCafeError):
    code = "conflict"


class RetriesExhausted(CrowdCafeError):
    code = "retries_exhausted"


class StorageUnavailable(CrowdCafeError):
    code = "storage_unavailable"


class StoreTxn:
    """One transaction: buffered writes plus a recorded read set.

    Reads see the committed state as of first access, overlaid with this
    transaction's own writes (read-your-writes).  Listing a collection
    records a read of the whole collection version, so any concurrent
    write to it conflicts.
    """

    def __init__(self, store: "Store"):
        self._store = store
        # key -> version observed (0 = absent)
        self._read_versions: Dict[Tuple[str, str], int] = {}
        self._read_collections: Dict[str, int] = {}
        self._writes: Dict[Tuple[str, str], Optional[dict]] = {}
        # committed snapshots are stable for the life of the txn
        self._snapshots: Dict[str, List[Tuple[str, dict]]] = {}

    def get(self, collection: str, key: str) -> Optional[dict]:
        ck = (collection, key)
        if ck in self._writes:
            value = self._writes[ck]
            return json.loads(json.dumps(value)) if value is not None else None
        version, value = self._store._read(collection, key)
        self._read_versions.setdefault(ck, version)
        return value

    def put(self, collection: str, key: str, value: dict) -> None:
        self._writes[(collection, key)] = json.loads(json.dumps(value))

    def delete(self, collection: str, key: str) -> None:
        self._writes[(collection, key)] = None

    def list(self, collection: str) -> List[Tuple[str, dict]]:
        """All records of a collection in insertion order, as (key, value)."""
        if collection in self._snapshots:
            snapshot = self._snapshots[collection]
        else:
            version, snapshot = self._store._read_collection(collection)
            self._read_collections.setdefault(collection, version)
            self._snapshots[collection] = snapshot
        merged: Dict[str, dict] = dict(snapshot)
        for (coll, key), value in self._writes.items():
            if coll != collection:
                continue
            if value is None:
                merged.pop(key, None)
            else:
                merged[key] = json.loads(json.dumps(value))
        return list(merged.items())

    def next_id(self, kind: str) -> str:
        """Monotonic per-kind identifier, e.g. "job-1"; stable across restarts."""
        record = self.get("counters", kind) or {"value": 0}
        record["value"] += 1
        self.put("counters", kind, record)
        return f"{kind}-{record['value']}"


class Store:
    """Embedded store; in-memory when path is None, WAL-backed otherwise."""

    def __init__(self, path: Optional[str] = None, max_retries: int = 200):
        self._lock = threading.Lock()
        self._data: Dict[str, Dict[str, Tuple[int, dict]]] = {}
        self._collection_versions: Dict[str, int] = {}
        self._version = 0
        self._max_retries = max_retries
        self._path = path
        self._wal = None
        if path is not None:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            self._replay(path)
            try:
                self._wal = open(path, "a", encoding="utf-8")
            except OSError as exc:
                raise StorageUnavailable(str(exc)) from None

    # -- internal reads used by StoreTxn -----------------------------------

    def _read(self, collection: str, key: str) -> Tuple[int, Optional[dict]]:
        with self._lock:
            record = self._data.get(collection, {}).get(key)
            if record is None:
                return 0, None
            version, value = record
            return version, json.loads(json.dumps(value))

    def _read_collection(self, collection: str) -> Tuple[int, List[Tuple[str, dict]]]:
        with self._lock:
            version = self._collection_versions.get(collection, 0)
            records = self._data.get(collection, {})
            # one serialization pass for the whole snapshot: much cheaper
            # than a deep copy per record
            raw = json.dumps([[k, v] for k, (_, v) in records.items()])
        return version, [tuple(pair) for pair in json.loads(raw)]

    # -- transactions ------------------------------------------------------

    def transact(self, body: Callable[[StoreTxn], T]) -> T:
        """Run body in a transaction, retrying on conflict with backoff."""
        delay = 0.0005
        for attempt in range(self._max_retries):
            txn = StoreTxn(self)
            result = body(txn)
            if self._commit(txn):
                return result
            time.sleep(delay * (1 + random.random()))
            delay = min(delay * 2, 0.02)
        raise RetriesExhausted(f"transaction conflicted {self._max_retries} times")

    def _commit(self, txn: StoreTxn) -> bool:
        with self._lock:
            for (collection, key), version in txn._read_versions.items():
                record = self._data.get(collection, {}).get(key)
                current = record[0] if record is not None else 0
                if current != version:
                    return False
            for collection, version in txn._read_collections.items():
                if self._collection_versions.get(collection, 0) != version:
                    return False
            if txn._writes:
                self._apply(txn._writes)
                self._log(txn._writes)
            return True

    def _apply(self, writes: Dict[Tuple[str, str], Optional[dict]]) -> None:
        for (collection, key), value in writes.items():
            self._version += 1
            records = self._data.setdefault(collection, {})
            if value is None:
                records.pop(key, None)
            else:
                records[key] = (self._version, value)
            self._collection_versions[collection] = self._version

    def _log(self, writes: Dict[Tuple[str, str], Optional[dict]]) -> None:
        if self._wal is None:
            return
        line = json.dumps(
            [
                {"collection": c, "key": k, "value": v}
                for (c, k), v in writes.items()
            ],
            separators=(",", ":"),
        )
        try:
            self._wal.write(line + "\n")
            self._wal.flush()
            os.fsync(self._wal.fileno())
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from None

    def _replay(self, path: str) -> None:
        if not os.path.exists(path):
            return
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entries = json.loads(line)
                except ValueError:
                    break  # torn trailing line from a crash mid-append
                writes = {
                    (e["collection"], e["key"]): e["value"] for e in entries
                }
                self._apply(writes)

    # -- convenience reads outside a transaction ---------------------------

    def get(self, collection: str, key: str) -> Optional[dict]:
        return self._read(collection, key)[1]

    def list(self, collection: str) -> List[Tuple[str, dict]]:
        return self._read_collection(collection)[1]

    def list_by_prefix(
        self, collection: str, predicate: Optional[Callable[[dict], bool]] = None
    ) -> Iterator[Tuple[str, dict]]:
        """Consistent snapshot of a collection, optionally filtered."""
        for key, value in self.list(collection):
            if predicate is None or predicate(value):
                yield key, value

    # -- export / import ---------------------------------------------------

    def export_jsonl(self) -> str:
        """Full dump: one collection-tagged record per line."""
        lines = []
        with self._lock:
            for collection in sorted(self._data):
                for key, (_, value) in self._data[collection].items():
                    lines.append(
                        json.dumps(
                            {"collection": collection, "key": key, "value": value},
                            separators=(",", ":"),
                        )
                    )
        return "\n".join(lines) + ("\n" if lines else "")

    def import_jsonl(self, text: str) -> int:
        """Load a dump produced by export_jsonl; returns records loaded."""
        count = 0

        def body(txn: StoreTxn) -> None:
            nonlocal count
            count = 0
            for line in text.splitlines():
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                txn.put(entry["collection"], entry["key"], entry["value"])
                count += 1

        self.transact(body)
        return count

    def close(self) -> None:
        if self._wal is not None:
            self._wal.close()
            self._wal = None
