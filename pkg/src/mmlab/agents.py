"""Observation encoding, action decoding and the two baseline quoters.

An action is a pair of ladder levels, one per side, each in 1..10; one level
is one basis point away from the same-side best quote, so the joint space
has exactly 100 actions.  Flattened action index is
``(a_bid - 1) * 10 + (a_ask - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

BPS = 1e-4

STATUS_PENDING = "PENDING"
STATUS_OPEN = "OPEN"
STATUS_CANCELLING = "CANCELLING"
STATUS_CLOSED = "CLOSED"
_STATUS_INDEX = {
    STATUS_PENDING: 0,
    STATUS_OPEN: 1,
    STATUS_CANCELLING: 2,
    STATUS_CLOSED: 3,
}

BASE_OBS_DIM = 12

#: Alpha block appended to the observation when enabled, in this order; each
#: feature contributes (value, validity) so undefined values stay neutral
#: without being mistaken for measured zeros.
DEFAULT_ALPHA_FEATURES = (
    "oid",
    "oiq",
    "tiq_200",
    "tic_200",
    "tio_200",
    "pret_200",
    "pret_1000",
)


@dataclass(frozen=True, slots=True)
class ActionPair:
    a_bid: int
    a_ask: int

    def __post_init__(self) -> None:
        if not (1 <= self.a_bid <= 10 and 1 <= self.a_ask <= 10):
            raise ValueError(f"action levels must be in 1..10, got {self}")

    @property
    def index(self) -> int:
        return (self.a_bid - 1) * 10 + (self.a_ask - 1)

    @classmethod
    def from_index(cls, index: int) -> "ActionPair":
        if not 0 <= index <= 99:
            raise ValueError(f"action index out of range: {index}")
        return cls(index // 10 + 1, index % 10 + 1)


def decode_action(
    action: ActionPair, best_bid: float, best_ask: float
) -> Tuple[float, float]:
    """Ladder levels to limit prices: bid below best bid, ask above best ask,
    one basis point per level."""
    if best_bid >= best_ask:
        raise ValueError(f"crossed top of book: {best_bid} >= {best_ask}")
    p_bid = best_bid * (1.0 - action.a_bid * BPS)
    p_ask = best_ask * (1.0 + action.a_ask * BPS)
    return p_bid, p_ask


@dataclass(slots=True)
class MarketView:
    """What the agent sees at a decision point: the current top of book and
    its own per-side order state (price is None when a side has no order)."""

    best_bid: float
    best_ask: float
    bid_status: str = STATUS_CLOSED
    bid_price: Optional[float] = None
    ask_status: str = STATUS_CLOSED
    ask_price: Optional[float] = None

    @property
    def mid(self) -> float:
        return (self.best_bid + self.best_ask) / 2.0


@dataclass(slots=True)
class Observation:
    """State-space vector: quote distances, order-status one-hots, inventory
    ratio, normalised entry price, and an optional alpha block."""

    rdr_bid: float
    rdr_ask: float
    bid_status: str
    ask_status: str
    ir: float
    ep_rel: float
    alpha: Optional[Tuple[float, ...]] = None  # (value, valid) interleaved

    @property
    def dim(self) -> int:
        return BASE_OBS_DIM + (len(self.alpha) if self.alpha is not None else 0)

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        vec[0] = self.rdr_bid
        vec[1] = self.rdr_ask
        vec[2 + _STATUS_INDEX[self.bid_status]] = 1.0
        vec[6 + _STATUS_INDEX[self.ask_status]] = 1.0
        vec[10] = self.ir
        vec[11] = self.ep_rel
        if self.alpha is not None:
            vec[12:] = self.alpha
        return vec


def encode_alpha(
    values: Dict[str, Optional[float]], names: Sequence[str]
) -> Tuple[float, ...]:
    """Interleave (value, validity) pairs; undefined features impute to 0
    with a zero validity bit."""
    out = []
    for name in names:
        v = values.get(name)
        if v is None:
            out.extend((0.0, 0.0))
        else:
            out.extend((float(v), 1.0))
    return tuple(out)


def encode_observation(
    view: MarketView,
    inventory: float,
    i_max: float,
    entry_price: float,
    alpha: Optional[Dict[str, Optional[float]]] = None,
    alpha_names: Sequence[str] = DEFAULT_ALPHA_FEATURES,
) -> Observation:
    """Build the observation from the market view and portfolio.

    A side with no order (CLOSED) contributes a zero distance ratio; the
    status one-hot disambiguates that from an order sitting at the touch.
    The entry price enters as its relative distance from the mid so the
    feature stays stationary across price levels.
    """
    rdr_bid = 0.0
    if view.bid_status != STATUS_CLOSED and view.bid_price is not None:
        rdr_bid = (view.best_bid - view.bid_price) / view.best_bid
    rdr_ask = 0.0
    if view.ask_status != STATUS_CLOSED and view.ask_price is not None:
        rdr_ask = (view.ask_price - view.best_ask) / view.best_ask
    mid = view.mid
    ep_rel = (entry_price - mid) / mid if inventory != 0 else 0.0
    return Observation(
        rdr_bid=rdr_bid,
        rdr_ask=rdr_ask,
        bid_status=view.bid_status,
        ask_status=view.ask_status,
        ir=inventory / i_max,
        ep_rel=ep_rel,
        alpha=encode_alpha(alpha, alpha_names) if alpha is not None else None,
    )


def observation_schema(alpha_names: Optional[Sequence[str]] = None) -> dict:
    """Machine-readable layout of the observation vector, for offline trace
    decoding; written beside checkpoints."""
    fields = [
        "rdr_bid",
        "rdr_ask",
        "os_bid_pending",
        "os_bid_open",
        "os_bid_cancelling",
        "os_bid_closed",
        "os_ask_pending",
        "os_ask_open",
        "os_ask_cancelling",
        "os_ask_closed",
        "inventory_ratio",
        "entry_price_rel",
    ]
    if alpha_names:
        for name in alpha_names:
            fields.extend((name, f"{name}_valid"))
    return {"version": 1, "dim": len(fields), "fields": fields}


# -- baseline policies ------------------------------------------------------


class NullPolicy:
    """Never quotes; every consultation holds both sides."""

    def act(self, obs: Observation, rng=None) -> Optional[ActionPair]:
        return None


class FixedSpreadPolicy:
    """Quotes the median ladder level on both sides, every step.

    The median of {1..10} is ambiguous between 5 and 6; we fix 5 (ties broken
    low).  Baseline comparability only needs consistency.
    """

    LEVEL = 5

    def act(self, obs: Observation, rng=None) -> ActionPair:
        return ActionPair(self.LEVEL, self.LEVEL)


class AdaptiveSpreadPolicy:
    """Inventory-proportional quote skew.

    Long inventory pushes the bid away and pulls the ask in, linearly in the
    inventory ratio with proportionality ``k``; levels clamp to the ladder.
    """

    def __init__(self, k: float):
        if k < 0:
            raise ValueError("k must be >= 0")
        self.k = k

    def act(self, obs: Observation, rng=None) -> ActionPair:
        skew = self.k * obs.ir * 5.0
        a_bid = min(10, max(1, round(5 + skew)))
        a_ask = min(10, max(1, round(5 - skew)))
        return ActionPair(a_bid, a_ask)


def tune_adaptive_k(
    ticks,
    k_grid: Iterable[float],
    latency=None,
    i_max: float = 10.0,
    lam: float = 0.01,
    seed: int = 0,
) -> float:
    """Pick the grid k with the highest total backtest reward on the training
    ticks; ties resolve to the smallest k."""
    from .backtest import run_backtest  # local import: backtest depends on agents
    from .env import LatencyConfig

    grid = sorted(set(float(k) for k in k_grid))
    if not grid:
        raise ValueError("k grid must be non-empty")
    latency = latency or LatencyConfig(0, 0)
    best_k, best_reward = grid[0], -np.inf
    for k in grid:
        result = run_backtest(
            AdaptiveSpreadPolicy(k), ticks, latency, lam=lam, i_max=i_max, seed=seed
        )
        if result.total_reward > best_reward:
            best_k, best_reward = k, result.total_reward
    return best_k
