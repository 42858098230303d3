"""Level-3 message and snapshot records, plus the persisted log format.

The message log is UTF-8 NDJSON, one message per line, keys always present
and in a fixed order: sequence, timestamp_ms, msg_type, order_id, side,
price, size, reason, exchange_time_ms.  Absent values are JSON null.
``timestamp_ms`` is the recorder-local arrival time; an exchange-supplied
timestamp, when one exists, is kept in ``exchange_time_ms`` but never used
for ordering (the sequence number is authoritative).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional

from .errors import LogParseError, MessageInvariantError, SequenceError, SnapshotError

MSG_RECEIVED = "received"
MSG_OPEN = "open"
MSG_DONE = "done"
MSG_MATCH = "match"
MSG_TYPES = (MSG_RECEIVED, MSG_OPEN, MSG_DONE, MSG_MATCH)

SIDE_BID = "bid"
SIDE_ASK = "ask"
SIDES = (SIDE_BID, SIDE_ASK)

REASON_CANCELED = "canceled"
REASON_FILLED = "filled"
REASONS = (REASON_CANCELED, REASON_FILLED)

_LOG_FIELDS = (
    "sequence",
    "timestamp_ms",
    "msg_type",
    "order_id",
    "side",
    "price",
    "size",
    "reason",
    "exchange_time_ms",
)


@dataclass(slots=True)
class Level3Message:
    """One exchange event.

    ``price``/``size`` are required and positive for open and match messages;
    ``reason`` is required for done messages and forbidden elsewhere.  For a
    match, ``order_id`` and ``side`` identify the *resting* (maker) order.
    """

    sequence: int
    timestamp_ms: int
    msg_type: str
    order_id: str
    side: str
    price: Optional[float] = None
    size: Optional[float] = None
    reason: Optional[str] = None
    exchange_time_ms: Optional[int] = None

    def validate(self) -> None:
        if self.msg_type not in MSG_TYPES:
            raise MessageInvariantError(f"unknown msg_type {self.msg_type!r}")
        if self.side not in SIDES:
            raise MessageInvariantError(f"unknown side {self.side!r}")
        if self.msg_type in (MSG_OPEN, MSG_MATCH):
            if self.price is None or self.price <= 0:
                raise MessageInvariantError(
                    f"{self.msg_type} requires price > 0, got {self.price}"
                )
            if self.size is None or self.size <= 0:
                raise MessageInvariantError(
                    f"{self.msg_type} requires size > 0, got {self.size}"
                )
        if self.msg_type == MSG_DONE:
            if self.reason not in REASONS:
                raise MessageInvariantError(f"done requires a reason, got {self.reason!r}")
        elif self.reason is not None:
            raise MessageInvariantError(f"{self.msg_type} must not carry a reason")

    def to_json(self) -> str:
        rec = {f: getattr(self, f) for f in _LOG_FIELDS}
        return json.dumps(rec, separators=(",", ":"))

    @classmethod
    def from_dict(cls, rec: dict) -> "Level3Message":
        try:
            msg = cls(
                sequence=int(rec["sequence"]),
                timestamp_ms=int(rec["timestamp_ms"]),
                msg_type=rec["msg_type"],
                order_id=str(rec["order_id"]),
                side=rec["side"],
                price=None if rec.get("price") is None else float(rec["price"]),
                size=None if rec.get("size") is None else float(rec["size"]),
                reason=rec.get("reason"),
                exchange_time_ms=(
                    None
                    if rec.get("exchange_time_ms") is None
                    else int(rec["exchange_time_ms"])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MessageInvariantError(f"malformed record: {exc}") from exc
        msg.validate()
        return msg


@dataclass(slots=True)
class BookSnapshot:
    """Full book snapshot: per-order (id, price, size) on both sides."""

    sequence: int
    bids: list  # [(order_id, price, size), ...]
    asks: list

    def validate(self) -> None:
        seen: set = set()
        for oid, price, size in list(self.bids) + list(self.asks):
            if price <= 0 or size <= 0:
                raise SnapshotError(f"order {oid}: non-positive price/size")
            if oid in seen:
                raise SnapshotError(f"duplicate order_id {oid!r}")
            seen.add(oid)
        if self.bids and self.asks:
            best_bid = max(p for _, p, _ in self.bids)
            best_ask = min(p for _, p, _ in self.asks)
            if best_bid >= best_ask:
                raise SnapshotError(f"crossed snapshot: bid {best_bid} >= ask {best_ask}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sequence": self.sequence,
                "bids": [[o, p, s] for o, p, s in self.bids],
                "asks": [[o, p, s] for o, p, s in self.asks],
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_dict(cls, rec: dict) -> "BookSnapshot":
        snap = cls(
            sequence=int(rec["sequence"]),
            bids=[(str(o), float(p), float(s)) for o, p, s in rec["bids"]],
            asks=[(str(o), float(p), float(s)) for o, p, s in rec["asks"]],
        )
        snap.validate()
        return snap


def write_log(messages: Iterable[Level3Message], fh: IO[str]) -> int:
    """Append messages to an open text handle; returns the count written."""
    n = 0
    for msg in messages:
        fh.write(msg.to_json())
        fh.write("\n")
        n += 1
    return n


def replay_log(path: str, permissive: bool = False) -> Iterator[Level3Message]:
    """Stream messages back from a log file in stored order.

    Malformed or invariant-violating lines raise :class:`LogParseError`
    naming the line.  Non-monotone sequences raise :class:`SequenceError`
    unless ``permissive`` is set.
    """
    last_seq: Optional[int] = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                msg = Level3Message.from_dict(rec)
            except MessageInvariantError as exc:
                raise LogParseError(line_no, str(exc)) from exc
            except json.JSONDecodeError as exc:
                raise LogParseError(line_no, f"invalid JSON: {exc}") from exc
            if last_seq is not None and msg.sequence <= last_seq and not permissive:
                raise SequenceError(
                    f"line {line_no}: sequence {msg.sequence} <= previous {last_seq}"
                )
            last_seq = msg.sequence
            yield msg


def load_snapshot(path: str) -> BookSnapshot:
    with open(path, "r", encoding="utf-8") as fh:
        return BookSnapshot.from_dict(json.load(fh))


def save_snapshot(snapshot: BookSnapshot, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(snapshot.to_json())
        fh.write("\n")


def count_gaps(sequences: Iterable[int]) -> int:
    """Number of adjacent pairs with a jump greater than one."""
    gaps = 0
    prev: Optional[int] = None
    for seq in sequences:
        if prev is not None and seq - prev > 1:
            gaps += 1
        prev = seq
    return gaps
