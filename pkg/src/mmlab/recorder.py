"""Level-3 feed recording: persist a replayable message log plus a snapshot.

Endpoints may be live (``ws://``/``wss://`` feed, ``http(s)://`` snapshot)
or local fixture files (anything else).  The procedure mirrors the standard
snapshot-plus-stream recipe: start buffering the stream, fetch the snapshot,
and require the snapshot's sequence to fall inside the buffered range --
a snapshot older than the first buffered message means updates were lost and
is an error.  Messages at or before the snapshot sequence stay in the log;
discarding them is the reconstructor's job.

On a connection failure the partial log remains intact and a retriable
:class:`FeedError` is raised; :func:`record_with_reconnect` turns that into
a fresh snapshot and a new log segment (never splicing across the gap, which
would be unsound without exchange-side replay).
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from datetime import datetime
from typing import Iterator, Optional
from urllib.parse import urlparse
from urllib.request import urlopen

from .errors import FeedError, SnapshotOutOfRangeError
from .messages import (
    BookSnapshot,
    Level3Message,
    count_gaps,
    replay_log,
    save_snapshot,
)

logger = logging.getLogger(__name__)

_FLUSH_EVERY = 256


@dataclass
class RecordingSummary:
    message_count: int
    first_sequence: Optional[int]
    last_sequence: Optional[int]
    gap_count: int

    def to_dict(self) -> dict:
        return {
            "message_count": self.message_count,
            "first_sequence": self.first_sequence,
            "last_sequence": self.last_sequence,
            "gap_count": self.gap_count,
        }


# -- exchange adapters ---------------------------------------------------------


def _iso_to_ms(stamp: str) -> int:
    return int(datetime.fromisoformat(stamp.replace("Z", "+00:00")).timestamp() * 1000)


def coinbase_message(raw: dict, arrival_ms: int) -> Optional[Level3Message]:
    """Map one full-channel message into the native record; None for
    heartbeats/subs and anything else that is not a book event."""
    kind = raw.get("type")
    if kind not in ("received", "open", "done", "match"):
        return None
    side = "bid" if raw.get("side") == "buy" else "ask"
    exchange_ms = _iso_to_ms(raw["time"]) if "time" in raw else None
    if kind == "match":
        order_id = raw["maker_order_id"]
        price = float(raw["price"])
        size = float(raw["size"])
        reason = None
    else:
        order_id = raw.get("order_id", "")
        price = float(raw["price"]) if raw.get("price") is not None else None
        size_key = "remaining_size" if kind in ("open", "done") else "size"
        size = float(raw[size_key]) if raw.get(size_key) is not None else None
        reason = raw.get("reason") if kind == "done" else None
    msg = Level3Message(
        sequence=int(raw["sequence"]),
        timestamp_ms=arrival_ms,
        msg_type=kind,
        order_id=order_id,
        side=side,
        price=price,
        size=size,
        reason=reason,
        exchange_time_ms=exchange_ms,
    )
    msg.validate()
    return msg


def coinbase_snapshot(raw: dict) -> BookSnapshot:
    """REST book snapshot (level 3): entries are [price, size, order_id]."""
    return BookSnapshot.from_dict(
        {
            "sequence": raw["sequence"],
            "bids": [[oid, float(p), float(s)] for p, s, oid in raw["bids"]],
            "asks": [[oid, float(p), float(s)] for p, s, oid in raw["asks"]],
        }
    )


# -- sources -------------------------------------------------------------------


def _is_live(url: str) -> bool:
    return urlparse(url).scheme in ("ws", "wss", "http", "https")


def _strip_file_scheme(url: str) -> str:
    return url[len("file://") :] if url.startswith("file://") else url


def open_feed(url: str, duration_s: float) -> Iterator[Level3Message]:
    """Message iterator for a feed endpoint; fixture files replay instantly."""
    if urlparse(url).scheme in ("ws", "wss"):
        return _live_feed(url, duration_s)
    return replay_log(_strip_file_scheme(url), permissive=True)


def _live_feed(url: str, duration_s: float) -> Iterator[Level3Message]:
    try:
        import websockets.sync.client as ws_client
    except ImportError as exc:  # pragma: no cover - needs the 'live' extra
        raise FeedError(
            "live recording needs the 'live' extra (pip install mmlab[live])"
        ) from exc
    deadline = time.monotonic() + duration_s
    try:
        with ws_client.connect(url) as conn:
            while time.monotonic() < deadline:
                raw = json.loads(conn.recv(timeout=max(0.1, deadline - time.monotonic())))
                msg = coinbase_message(raw, arrival_ms=int(time.time() * 1000))
                if msg is not None:
                    yield msg
    except FeedError:
        raise
    except Exception as exc:  # noqa: BLE001 - any transport failure is retriable
        raise FeedError(f"feed connection failed: {exc}") from exc


def fetch_snapshot(url: str) -> BookSnapshot:
    if _is_live(url):
        try:
            with urlopen(url, timeout=30) as resp:
                raw = json.load(resp)
        except Exception as exc:  # noqa: BLE001
            raise FeedError(f"snapshot fetch failed: {exc}") from exc
        return coinbase_snapshot(raw)
    with open(_strip_file_scheme(url), "r", encoding="utf-8") as fh:
        return BookSnapshot.from_dict(json.load(fh))


# -- recording ------------------------------------------------------------------


def record_session(
    feed_url: str,
    snapshot_url: str,
    out_dir: str,
    duration_s: float,
) -> RecordingSummary:
    """Record one segment: ``snapshot.json`` + append-only ``messages.ndjson``.

    The snapshot is fetched after the first stream message arrives; recording
    then continues until the stream ends or the duration elapses.  Messages
    whose sequence does not advance the log are dropped so the persisted
    sequence stays strictly increasing.
    """
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "messages.ndjson")
    summary = RecordingSummary(0, None, None, 0)
    if duration_s <= 0:
        open(log_path, "w", encoding="utf-8").close()
        _write_summary(out_dir, summary)
        return summary

    snapshot: Optional[BookSnapshot] = None
    snapshot_checked = False
    last_seq: Optional[int] = None
    try:
        with open(log_path, "w", encoding="utf-8") as log:
            for msg in open_feed(feed_url, duration_s):
                if last_seq is not None and msg.sequence <= last_seq:
                    logger.warning("dropping non-advancing sequence %d", msg.sequence)
                    continue
                if summary.first_sequence is None:
                    summary.first_sequence = msg.sequence
                    snapshot = fetch_snapshot(snapshot_url)
                    if snapshot.sequence < summary.first_sequence:
                        raise SnapshotOutOfRangeError(
                            f"snapshot sequence {snapshot.sequence} predates first "
                            f"buffered message {summary.first_sequence}"
                        )
                if last_seq is not None and msg.sequence - last_seq > 1:
                    summary.gap_count += 1
                last_seq = msg.sequence
                summary.last_sequence = msg.sequence
                summary.message_count += 1
                log.write(msg.to_json())
                log.write("\n")
                if summary.message_count % _FLUSH_EVERY == 0:
                    log.flush()
                if (
                    not snapshot_checked
                    and snapshot is not None
                    and msg.sequence >= snapshot.sequence
                ):
                    snapshot_checked = True
    except FeedError:
        _write_summary(out_dir, summary)
        raise
    if snapshot is not None:
        if not snapshot_checked:
            raise SnapshotOutOfRangeError(
                f"stream ended at {summary.last_sequence} before reaching snapshot "
                f"sequence {snapshot.sequence}"
            )
        save_snapshot(snapshot, os.path.join(out_dir, "snapshot.json"))
    _write_summary(out_dir, summary)
    return summary


def _write_summary(out_dir: str, summary: RecordingSummary) -> None:
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
        fh.write("\n")


def record_with_reconnect(
    feed_url: str,
    snapshot_url: str,
    out_dir: str,
    duration_s: float,
    max_segments: int = 16,
) -> list:
    """Retriable wrapper: each reconnect re-requests a snapshot and records
    into a fresh ``seg-NNN`` directory instead of splicing across the gap."""
    summaries = []
    started = time.monotonic()
    for segment in range(max_segments):
        remaining = duration_s - (time.monotonic() - started)
        if remaining <= 0 and segment > 0:
            break
        seg_dir = os.path.join(out_dir, f"seg-{segment:03d}")
        try:
            summaries.append(
                record_session(feed_url, snapshot_url, seg_dir, max(0.0, remaining))
            )
            break
        except FeedError as exc:
            logger.warning("segment %d ended with %s; reconnecting", segment, exc)
            summaries.append(_read_summary(seg_dir))
    return summaries


def _read_summary(seg_dir: str) -> RecordingSummary:
    with open(os.path.join(seg_dir, "summary.json"), "r", encoding="utf-8") as fh:
        return RecordingSummary(**json.load(fh))


def summarize_log(path: str) -> RecordingSummary:
    """Independent scan of a finished log (used by gap auditing)."""
    seqs = [msg.sequence for msg in replay_log(path, permissive=True)]
    return RecordingSummary(
        message_count=len(seqs),
        first_sequence=seqs[0] if seqs else None,
        last_sequence=seqs[-1] if seqs else None,
        gap_count=count_gaps(seqs),
    )
