"""Turn requestor input (nothing, CSV bytes, or a feed query) into unit payloads.

Everything here is a pure function over its inputs; batching math lives in
batch_units so both the preview endpoint and the assignment path share it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Protocol

from .model import CrowdCafeError, ValidationError

__all__ = [
    "AdapterFailure",
    "DuplicateColumn",
    "EmptyHeader",
    "FeedAdapter",
    "FeedQuery",
    "FixtureFeedAdapter",
    "NotUtf8",
    "RaggedRow",
    "UnknownAdapter",
    "batch_units",
    "fetch_feed",
    "parse_csv",
    "serialize_csv",
]


class NotUtf8(CrowdCafeError):
    code = "not_utf8"


class EmptyHeader(CrowdCafeError):
    code = "empty_header"


class DuplicateColumn(CrowdCafeError):
    code = "duplicate_column"

    def __init__(self, name: str):
        super().__init__(f"duplicate column name: {name!r}")
        self.name = name


class RaggedRow(CrowdCafeError):
    code = "ragged_row"

    def __init__(self, line: int, expected: int, got: int):
        super().__init__(f"row at line {line} has {got} values, expected {expected}")
        self.line = line


class UnknownAdapter(CrowdCafeError):
    code = "unknown_adapter"

    def __init__(self, name: str):
        super().__init__(f"no feed adapter registered under {name!r}")
        self.name = name


class AdapterFailure(CrowdCafeError):
    code = "adapter_failure"


def parse_csv(data: bytes) -> List[Dict[str, str]]:
    """Parse CSV bytes into one payload mapping per data row, order preserved.

    Dialect: comma separated, double-quote quoting, LF or CRLF endings.
    The first row is the header; its names become the payload keys.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NotUtf8(str(exc)) from None
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyHeader("input has no header row") from None
    if not header or any(not name for name in header):
        raise EmptyHeader("header has an empty column name")
    seen = set()
    for name in header:
        if name in seen:
            raise DuplicateColumn(name)
        seen.add(name)
    payloads = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise RaggedRow(reader.line_num, len(header), len(row))
        payloads.append(dict(zip(header, row)))
    return payloads


def serialize_csv(payloads: List[Mapping[str, str]], header: List[str]) -> bytes:
    """Inverse of parse_csv for well-formed input (used by round-trip checks)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for payload in payloads:
        writer.writerow([payload.get(name, "") for name in header])
    return out.getvalue().encode("utf-8")


@dataclass(frozen=True)
class FeedQuery:
    """A hashtag-driven request against a named feed adapter."""

    source: str
    hashtag: str
    limit: int

    def __post_init__(self):
        hashtag = self.hashtag
        if not hashtag or hashtag.startswith("#"):
            raise ValidationError("hashtag must be non-empty without a leading '#'")
        if self.limit < 1:
            raise ValidationError("feed limit must be >= 1")

    def to_json(self) -> dict:
        return {"source": self.source, "hashtag": self.hashtag, "limit": self.limit}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FeedQuery":
        return cls(obj["source"], obj["hashtag"], int(obj["limit"]))


class FeedAdapter(Protocol):
    def fetch(self, query: FeedQuery) -> List[Dict[str, str]]: ...


class FixtureFeedAdapter:
    """Feed adapter reading a local JSON fixture file.

    The fixture is a JSON array of objects, each with "media_url" and/or
    "text" plus arbitrary extra string fields.  Items tagged with a
    "hashtag" field are filtered to the query's hashtag; untagged items
    match any query.  Deterministic: file order is preserved.
    """

    def __init__(self, path: Path):
        self.path = Path(path)

    def fetch(self, query: FeedQuery) -> List[Dict[str, str]]:
        try:
            items = json.loads(self.path.read_text("utf-8"))
        except (OSError, ValueError) as exc:
            raise AdapterFailure(f"cannot read fixture {self.path}: {exc}") from None
        if not isinstance(items, list):
            raise AdapterFailure("fixture must be a JSON array")
        results = []
        for item in items:
            if not isinstance(item, dict) or not ("media_url" in item or "text" in item):
                raise AdapterFailure("fixture items need a media_url or text field")
            tag = item.get("hashtag")
            if tag is not None and tag.lstrip("#") != query.hashtag:
                continue
            results.append({k: str(v) for k, v in item.items()})
            if len(results) == query.limit:
                break
        return results


def fetch_feed(
    adapters: Mapping[str, FeedAdapter], query: FeedQuery
) -> List[Dict[str, str]]:
    """Run the query against the adapter registered under query.source."""
    adapter = adapters.get(query.source)
    if adapter is None:
        raise UnknownAdapter(query.source)
    payloads = adapter.fetch(query)
    return payloads[: query.limit]


def batch_units(n_units: int, batch_size: int) -> List[int]:
    """Per-instance sizes for n_units split into batches of batch_size.

    ceil(n/k) instances, all of size k except a possibly-short last one.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    if n_units < 0:
        raise ValidationError("unit count must be >= 0")
    full, rest = divmod(n_units, batch_size)
    sizes = [batch_size] * full
    if rest:
        sizes.append(rest)
    return sizes
