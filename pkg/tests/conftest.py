"""Shared fixtures: synthetic level-3 streams and an independent naive book.

The naive book deliberately avoids every optimisation the production book
uses (no order index, no sorted price lists, no cached level totals) so the
two implementations only agree if the semantics agree.  Sizes are generated
as multiples of 0.25 so float arithmetic on them is exact and structural
comparisons can demand bit-for-bit equality.
"""

from __future__ import annotations

import numpy as np
import pytest

from mmlab.messages import (
    MSG_DONE,
    MSG_MATCH,
    MSG_OPEN,
    MSG_RECEIVED,
    REASON_CANCELED,
    BookSnapshot,
    Level3Message,
)


class NaiveBook:
    """Scan-everything reference implementation of the book semantics."""

    def __init__(self, price_decimals: int = 2):
        self.scale = 10**price_decimals
        self.bids: dict = {}  # pips -> list of [oid, size]
        self.asks: dict = {}
        self.last_sequence = 0

    @classmethod
    def from_snapshot(cls, snapshot: BookSnapshot, price_decimals: int = 2) -> "NaiveBook":
        book = cls(price_decimals)
        for oid, price, size in snapshot.bids:
            book.bids.setdefault(round(price * book.scale), []).append([oid, size])
        for oid, price, size in snapshot.asks:
            book.asks.setdefault(round(price * book.scale), []).append([oid, size])
        book.last_sequence = snapshot.sequence
        return book

    def best_bid_pips(self):
        return max(self.bids) if self.bids else None

    def best_ask_pips(self):
        return min(self.asks) if self.asks else None

    def _find(self, oid: str):
        for side in (self.bids, self.asks):
            for pips, orders in side.items():
                for rec in orders:
                    if rec[0] == oid:
                        return side, pips, orders, rec
        return None

    def apply(self, msg: Level3Message) -> None:
        if msg.sequence <= self.last_sequence:
            return
        self.last_sequence = msg.sequence
        if msg.msg_type == MSG_RECEIVED:
            return
        if msg.msg_type == MSG_OPEN:
            if self._find(msg.order_id) is not None:
                return
            pips = round(msg.price * self.scale)
            if msg.side == "bid":
                ba = self.best_ask_pips()
                if ba is not None and pips >= ba:
                    return
                self.bids.setdefault(pips, []).append([msg.order_id, msg.size])
            else:
                bb = self.best_bid_pips()
                if bb is not None and pips <= bb:
                    return
                self.asks.setdefault(pips, []).append([msg.order_id, msg.size])
            return
        hit = self._find(msg.order_id)
        if hit is None:
            return
        side, pips, orders, rec = hit
        if msg.msg_type == MSG_DONE:
            orders.remove(rec)
            if not orders:
                del side[pips]
        elif msg.msg_type == MSG_MATCH:
            take = min(msg.size, rec[1])
            rec[1] -= take
            if rec[1] <= 0:
                orders.remove(rec)
                if not orders:
                    del side[pips]


class StreamGenerator:
    """Produces a valid-but-messy level-3 stream with a tracked shadow state.

    Includes the awkward cases both implementations must agree on: unknown
    done/match ids, duplicate opens, crossing opens, oversized matches and
    stale sequence numbers.
    """

    def __init__(self, rng: np.random.Generator, p0_pips: int = 10000):
        self.rng = rng
        self.p0 = p0_pips
        self.seq = 100
        self.ts = 1_000_000
        self.next_oid = 0
        self.live: list = []  # [oid, side, pips, size]

    def _oid(self) -> str:
        self.next_oid += 1
        return f"o{self.next_oid}"

    def _size(self) -> float:
        return float(self.rng.integers(1, 17)) * 0.25

    def snapshot(self, depth_per_side: int = 4) -> BookSnapshot:
        bids, asks = [], []
        for i in range(depth_per_side):
            oid = self._oid()
            pips = self.p0 - 1 - int(self.rng.integers(0, 3)) - 2 * i
            size = self._size()
            bids.append((oid, pips / 100.0, size))
            self.live.append([oid, "bid", pips, size])
        for i in range(depth_per_side):
            oid = self._oid()
            pips = self.p0 + 1 + int(self.rng.integers(0, 3)) + 2 * i
            size = self._size()
            asks.append((oid, pips / 100.0, size))
            self.live.append([oid, "ask", pips, size])
        return BookSnapshot(sequence=self.seq, bids=bids, asks=asks)

    def _best(self, side: str):
        prices = [o[2] for o in self.live if o[1] == side]
        if not prices:
            return None
        return max(prices) if side == "bid" else min(prices)

    def _advance(self) -> None:
        self.seq += 1 if self.rng.random() > 0.03 else int(self.rng.integers(2, 5))
        self.ts += int(self.rng.integers(1, 20))

    def message(self) -> Level3Message:
        self._advance()
        roll = self.rng.random()
        if roll < 0.40 or not self.live:
            return self._open()
        if roll < 0.55:
            return self._done()
        if roll < 0.75:
            return self._match()
        if roll < 0.85:
            return self._received()
        return self._oddball()

    def _open(self) -> Level3Message:
        side = "bid" if self.rng.random() < 0.5 else "ask"
        bb, ba = self._best("bid"), self._best("ask")
        if side == "bid":
            hi = (ba - 1) if ba is not None else self.p0
            pips = hi - int(self.rng.integers(0, 30))
        else:
            lo = (bb + 1) if bb is not None else self.p0
            pips = lo + int(self.rng.integers(0, 30))
        oid = self._oid()
        size = self._size()
        self.live.append([oid, side, pips, size])
        return Level3Message(self.seq, self.ts, MSG_OPEN, oid, side, pips / 100.0, size)

    def _done(self) -> Level3Message:
        i = int(self.rng.integers(0, len(self.live)))
        oid, side, pips, size = self.live.pop(i)
        return Level3Message(
            self.seq, self.ts, MSG_DONE, oid, side, pips / 100.0, size, REASON_CANCELED
        )

    def _match(self) -> Level3Message:
        i = int(self.rng.integers(0, len(self.live)))
        oid, side, pips, size = self.live[i]
        if self.rng.random() < 0.5:
            take = size
        else:
            take = float(self.rng.integers(1, max(2, int(size * 4)))) * 0.25
            take = min(take, size)
        if take >= size:
            self.live.pop(i)
        else:
            self.live[i][3] = size - take
        return Level3Message(self.seq, self.ts, MSG_MATCH, oid, side, pips / 100.0, take)

    def _received(self) -> Level3Message:
        side = "bid" if self.rng.random() < 0.5 else "ask"
        return Level3Message(self.seq, self.ts, MSG_RECEIVED, self._oid(), side)

    def _oddball(self) -> Level3Message:
        roll = self.rng.random()
        side = "bid" if self.rng.random() < 0.5 else "ask"
        if roll < 0.3:  # done for an id nobody knows
            return Level3Message(
                self.seq, self.ts, MSG_DONE, "ghost", side, None, 1.0, REASON_CANCELED
            )
        if roll < 0.5:  # match for an unknown id
            return Level3Message(
                self.seq, self.ts, MSG_MATCH, "ghost", side, self.p0 / 100.0, 0.25
            )
        if roll < 0.7 and self.live:  # oversized match (clamped by both books)
            i = int(self.rng.integers(0, len(self.live)))
            oid, oside, pips, size = self.live.pop(i)
            return Level3Message(
                self.seq, self.ts, MSG_MATCH, oid, oside, pips / 100.0, size + 1.0
            )
        if roll < 0.85:  # crossing open: both implementations must drop it
            bb, ba = self._best("bid"), self._best("ask")
            if side == "bid" and ba is not None:
                pips = ba + int(self.rng.integers(0, 3))
            elif side == "ask" and bb is not None:
                pips = bb - int(self.rng.integers(0, 3))
            else:
                pips = self.p0
            return Level3Message(
                self.seq, self.ts, MSG_OPEN, self._oid(), side, pips / 100.0, 0.5
            )
        # stale sequence: must be discarded silently
        return Level3Message(
            max(1, self.seq - 50), self.ts, MSG_RECEIVED, self._oid(), side
        )


def make_stream(seed: int, n_messages: int):
    gen = StreamGenerator(np.random.default_rng(seed))
    snapshot = gen.snapshot()
    return snapshot, [gen.message() for _ in range(n_messages)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
