"""Local order-book reconstruction from a snapshot plus a level-3 stream.

Price levels are keyed by integer pips (price scaled by 10**price_decimals)
so level identity is bit-exact; float prices only appear at the query
boundary.  Within a level, orders are FIFO in arrival order.
"""

from __future__ import annotations

import logging
from bisect import bisect_left, insort
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Tuple

from .errors import (
    BookIntegrityError,
    CrossedBookError,
    PriceGridError,
    SideExhaustedError,
    WindowCoverageError,
)
from .messages import (
    MSG_DONE,
    MSG_MATCH,
    MSG_OPEN,
    MSG_RECEIVED,
    REASON_CANCELED,
    SIDE_ASK,
    SIDE_BID,
    BookSnapshot,
    Level3Message,
)

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class TopOfBook:
    """One top-of-book observation; the environment's clock unit."""

    timestamp_ms: int
    best_bid: float
    best_ask: float

    @property
    def mid(self) -> float:
        return (self.best_bid + self.best_ask) / 2.0

    @property
    def spread(self) -> float:
        return (self.best_ask - self.best_bid) / self.best_bid


Tick = TopOfBook


class OrderBook:
    """Two price-ordered ladders of resting orders.

    Mutation is single-threaded; apply one message at a time via
    :meth:`apply_message`.  ``strict`` escalates recoverable inconsistencies
    (unknown done ids, oversized matches, crossing opens) to errors.
    """

    def __init__(self, price_decimals: int = 2, strict: bool = False):
        self.price_decimals = price_decimals
        self.strict = strict
        self._scale = 10**price_decimals
        # pips -> list of [order_id, size]; parallel running totals per level
        self._bids: dict = {}
        self._asks: dict = {}
        self._bid_totals: dict = {}
        self._ask_totals: dict = {}
        self._bid_prices: list = []  # ascending; best bid is last
        self._ask_prices: list = []  # ascending; best ask is first
        self._index: dict = {}  # order_id -> (side, pips)
        self.last_sequence: int = 0

    # -- construction -----------------------------------------------------

    @classmethod
    def from_snapshot(
        cls, snapshot: BookSnapshot, price_decimals: int = 2, strict: bool = False
    ) -> "OrderBook":
        snapshot.validate()
        book = cls(price_decimals=price_decimals, strict=strict)
        for oid, price, size in snapshot.bids:
            book._insert(SIDE_BID, oid, book._to_pips(price), size)
        for oid, price, size in snapshot.asks:
            book._insert(SIDE_ASK, oid, book._to_pips(price), size)
        if book._crossed():
            raise CrossedBookError(
                f"snapshot crossed: bid {book.best_bid()} >= ask {book.best_ask()}"
            )
        book.last_sequence = snapshot.sequence
        return book

    def _to_pips(self, price: float) -> int:
        scaled = price * self._scale
        pips = round(scaled)
        if abs(scaled - pips) > 1e-6:
            raise PriceGridError(
                f"price {price} off the 10^-{self.price_decimals} grid"
            )
        return pips

    def _from_pips(self, pips: int) -> float:
        return pips / self._scale

    # -- queries ----------------------------------------------------------

    def best_bid(self) -> Optional[float]:
        return self._from_pips(self._bid_prices[-1]) if self._bid_prices else None

    def best_ask(self) -> Optional[float]:
        return self._from_pips(self._ask_prices[0]) if self._ask_prices else None

    def top_of_book(self, timestamp_ms: int) -> Optional[TopOfBook]:
        if not self._bid_prices or not self._ask_prices:
            return None
        return TopOfBook(timestamp_ms, self.best_bid(), self.best_ask())

    def order_count(self) -> int:
        return len(self._index)

    def side_quantity(self, side: str) -> float:
        totals = self._bid_totals if side == SIDE_BID else self._ask_totals
        return sum(totals.values())

    def levels(self, side: str) -> Iterator[Tuple[float, float]]:
        """(price, total size) from best to worst."""
        for pips in self._iter_pips(side):
            totals = self._bid_totals if side == SIDE_BID else self._ask_totals
            yield self._from_pips(pips), totals[pips]

    def _iter_pips(self, side: str):
        if side == SIDE_BID:
            return reversed(self._bid_prices)
        return iter(self._ask_prices)

    def depth_price_at_quantity(self, side: str, quantity: float) -> float:
        """Price of the level where cumulative depth from the best first
        reaches ``quantity``."""
        if quantity <= 0:
            raise ValueError("quantity must be > 0")
        totals = self._bid_totals if side == SIDE_BID else self._ask_totals
        cum = 0.0
        for pips in self._iter_pips(side):
            cum += totals[pips]
            if cum >= quantity:
                return self._from_pips(pips)
        raise SideExhaustedError(
            f"{side} side holds {cum}, less than requested {quantity}"
        )

    def quantity_within_distance(self, side: str, distance: float) -> float:
        """Total resting size at levels within fractional ``distance`` of the
        best same-side price (inclusive).  Empty side yields 0."""
        if distance < 0:
            raise ValueError("distance must be >= 0")
        totals = self._bid_totals if side == SIDE_BID else self._ask_totals
        prices = self._bid_prices if side == SIDE_BID else self._ask_prices
        if not prices:
            return 0.0
        best = prices[-1] if side == SIDE_BID else prices[0]
        # cutoff in pip space; tiny slack so exact-boundary levels stay inclusive
        cutoff = distance * best + 1e-9
        total = 0.0
        for pips in self._iter_pips(side):
            if abs(best - pips) > cutoff:
                break
            total += totals[pips]
        return total

    # -- mutation ---------------------------------------------------------

    def apply_message(self, msg: Level3Message) -> bool:
        """Apply one stream message; returns False if it was discarded as a
        duplicate (sequence at or before the snapshot / last applied)."""
        if msg.sequence <= self.last_sequence:
            return False
        msg.validate()
        if msg.msg_type == MSG_RECEIVED:
            pass  # accepted by the matching engine, not yet on the book
        elif msg.msg_type == MSG_OPEN:
            self._apply_open(msg)
        elif msg.msg_type == MSG_DONE:
            self._apply_done(msg)
        elif msg.msg_type == MSG_MATCH:
            self._apply_match(msg)
        self.last_sequence = msg.sequence
        return True

    def _apply_open(self, msg: Level3Message) -> None:
        if msg.order_id in self._index:
            if self.strict:
                raise BookIntegrityError(f"open for live order_id {msg.order_id!r}")
            logger.warning("open for already-live order %s ignored", msg.order_id)
            return
        pips = self._to_pips(msg.price)
        if self._would_cross(msg.side, pips):
            if self.strict:
                raise BookIntegrityError(
                    f"open {msg.order_id!r} at {msg.price} would cross the book"
                )
            logger.warning(
                "crossing open %s at %s ignored (seq %d)",
                msg.order_id,
                msg.price,
                msg.sequence,
            )
            return
        self._insert(msg.side, msg.order_id, pips, msg.size)

    def _apply_done(self, msg: Level3Message) -> None:
        if msg.order_id not in self._index:
            # expected for orders opened before the snapshot window
            if self.strict:
                raise BookIntegrityError(f"done for unknown order_id {msg.order_id!r}")
            logger.debug("done for unknown order %s ignored", msg.order_id)
            return
        self._remove(msg.order_id)

    def _apply_match(self, msg: Level3Message) -> None:
        entry = self._index.get(msg.order_id)
        if entry is None:
            if self.strict:
                raise BookIntegrityError(f"match for unknown order_id {msg.order_id!r}")
            logger.warning("match for unknown order %s ignored", msg.order_id)
            return
        side, pips = entry
        orders = (self._bids if side == SIDE_BID else self._asks)[pips]
        totals = self._bid_totals if side == SIDE_BID else self._ask_totals
        for rec in orders:
            if rec[0] == msg.order_id:
                take = msg.size
                if take > rec[1]:
                    if self.strict:
                        raise BookIntegrityError(
                            f"match size {take} exceeds resting {rec[1]} "
                            f"for {msg.order_id!r}"
                        )
                    logger.warning(
                        "match size %s exceeds resting %s for %s; clamping",
                        take,
                        rec[1],
                        msg.order_id,
                    )
                    take = rec[1]
                rec[1] -= take
                totals[pips] -= take
                if rec[1] <= 0:
                    self._remove(msg.order_id)
                return

    def _would_cross(self, side: str, pips: int) -> bool:
        if side == SIDE_BID:
            return bool(self._ask_prices) and pips >= self._ask_prices[0]
        return bool(self._bid_prices) and pips <= self._bid_prices[-1]

    def _crossed(self) -> bool:
        return (
            bool(self._bid_prices)
            and bool(self._ask_prices)
            and self._bid_prices[-1] >= self._ask_prices[0]
        )

    def _insert(self, side: str, oid: str, pips: int, size: float) -> None:
        if size <= 0:
            raise BookIntegrityError(f"non-positive size {size} for {oid!r}")
        ladder = self._bids if side == SIDE_BID else self._asks
        totals = self._bid_totals if side == SIDE_BID else self._ask_totals
        prices = self._bid_prices if side == SIDE_BID else self._ask_prices
        level = ladder.get(pips)
        if level is None:
            ladder[pips] = [[oid, size]]
            totals[pips] = size
            insort(prices, pips)
        else:
            level.append([oid, size])
            totals[pips] += size
        self._index[oid] = (side, pips)

    def _remove(self, oid: str) -> None:
        side, pips = self._index.pop(oid)
        ladder = self._bids if side == SIDE_BID else self._asks
        totals = self._bid_totals if side == SIDE_BID else self._ask_totals
        prices = self._bid_prices if side == SIDE_BID else self._ask_prices
        level = ladder[pips]
        for i, rec in enumerate(level):
            if rec[0] == oid:
                totals[pips] -= rec[1]
                del level[i]
                break
        if not level:
            del ladder[pips]
            del totals[pips]
            del prices[bisect_left(prices, pips)]


def iter_top_of_book(
    snapshot: BookSnapshot,
    messages: Iterable[Level3Message],
    price_decimals: int = 2,
) -> Iterator[TopOfBook]:
    """Yield a tick on every best-quote change while replaying a stream."""
    book = OrderBook.from_snapshot(snapshot, price_decimals=price_decimals)
    last: Optional[Tuple[float, float]] = None
    if book.best_bid() is not None and book.best_ask() is not None:
        last = (book.best_bid(), book.best_ask())
    for msg in messages:
        if not book.apply_message(msg):
            continue
        bb, ba = book.best_bid(), book.best_ask()
        if bb is None or ba is None:
            continue
        if last != (bb, ba):
            last = (bb, ba)
            yield TopOfBook(msg.timestamp_ms, bb, ba)


# -- order-flow aggregation ----------------------------------------------


@dataclass(slots=True)
class FlowCounters:
    """Aggregated submissions, cancellations and trades over a window.

    Trade aggressor side is the opposite of the resting order's side: a match
    against a resting ask is an aggressive buy.
    """

    submitted_ask_qty: float = 0.0
    submitted_bid_qty: float = 0.0
    canceled_ask_qty: float = 0.0
    canceled_bid_qty: float = 0.0
    traded_buy_qty: float = 0.0
    traded_sell_qty: float = 0.0
    buy_trade_count: int = 0
    sell_trade_count: int = 0

    def add(self, msg: Level3Message) -> None:
        if msg.msg_type == MSG_OPEN:
            if msg.side == SIDE_ASK:
                self.submitted_ask_qty += msg.size
            else:
                self.submitted_bid_qty += msg.size
        elif msg.msg_type == MSG_DONE and msg.reason == REASON_CANCELED:
            qty = msg.size or 0.0
            if msg.side == SIDE_ASK:
                self.canceled_ask_qty += qty
            else:
                self.canceled_bid_qty += qty
        elif msg.msg_type == MSG_MATCH:
            if msg.side == SIDE_ASK:
                self.traded_buy_qty += msg.size
                self.buy_trade_count += 1
            else:
                self.traded_sell_qty += msg.size
                self.sell_trade_count += 1

    def subtract(self, msg: Level3Message) -> None:
        if msg.msg_type == MSG_OPEN:
            if msg.side == SIDE_ASK:
                self.submitted_ask_qty -= msg.size
            else:
                self.submitted_bid_qty -= msg.size
        elif msg.msg_type == MSG_DONE and msg.reason == REASON_CANCELED:
            qty = msg.size or 0.0
            if msg.side == SIDE_ASK:
                self.canceled_ask_qty -= qty
            else:
                self.canceled_bid_qty -= qty
        elif msg.msg_type == MSG_MATCH:
            if msg.side == SIDE_ASK:
                self.traded_buy_qty -= msg.size
                self.buy_trade_count -= 1
            else:
                self.traded_sell_qty -= msg.size
                self.sell_trade_count -= 1


def count_flow(
    messages: Iterable[Level3Message],
    window_start_ms: int,
    window_end_ms: int,
    log_start_ms: Optional[int] = None,
) -> FlowCounters:
    """Counters over messages with window_start < timestamp <= window_end."""
    if log_start_ms is not None and window_start_ms < log_start_ms:
        raise WindowCoverageError(
            f"window start {window_start_ms} precedes log start {log_start_ms}"
        )
    counters = FlowCounters()
    for msg in messages:
        if window_start_ms < msg.timestamp_ms <= window_end_ms:
            counters.add(msg)
    return counters


class RollingFlow:
    """Streaming flow counters over a trailing window of fixed width.

    Push messages in timestamp order; query as of any time at or after the
    last push.  Raises :class:`WindowCoverageError` when asked about a window
    that starts before the log did.
    """

    def __init__(self, window_ms: int, log_start_ms: int):
        from collections import deque

        self.window_ms = window_ms
        self.log_start_ms = log_start_ms
        self._buf = deque()
        self.counters = FlowCounters()

    def push(self, msg: Level3Message) -> None:
        self._buf.append(msg)
        self.counters.add(msg)

    def counters_at(self, now_ms: int) -> FlowCounters:
        if now_ms - self.window_ms < self.log_start_ms:
            raise WindowCoverageError(
                f"window [{now_ms - self.window_ms}, {now_ms}] precedes log start "
                f"{self.log_start_ms}"
            )
        cutoff = now_ms - self.window_ms
        while self._buf and self._buf[0].timestamp_ms <= cutoff:
            self.counters.subtract(self._buf.popleft())
        return self.counters
