"""Latency-aware event-driven exchange environment.

The environment advances over a top-of-book tick stream and manages at most
one unit-size agent order per side through the lifecycle

    PENDING -> OPEN -> CANCELLING -> CLOSED
    PENDING -> CLOSED(rejected)          (invalid at activation)
    OPEN / CANCELLING -> CLOSED(filled)  (crossed by a tick)

Submissions and cancellations take effect ``L_submit`` / ``L_cancel``
milliseconds after they are requested.  Event ordering at equal timestamps:
activations are processed *before* the tick at the same millisecond, so a
cancel that becomes effective "now" beats a simultaneous fill; this choice
is conservative for the agent and is what the replay oracle assumes.

Market depth is represented solely by the tick stream: only the agent's own
orders live here, fills are all-or-nothing at the order's limit price, and
queue position is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from . import accounting
from .agents import (
    STATUS_CANCELLING,
    STATUS_CLOSED,
    STATUS_OPEN,
    STATUS_PENDING,
    ActionPair,
    MarketView,
    Observation,
    decode_action,
    encode_observation,
)
from .errors import OrderRequestError
from .marketsim import TickSeries

FILL_INCLUSIVE = "inclusive"
FILL_STRICT = "strict"

REASON_REJECTED = "rejected"
REASON_CANCELED = "canceled"
REASON_FILLED = "filled"

DONE_FLAT = "flat"
DONE_TRUNCATED = "truncated"
DONE_CUTOFF = "cutoff"

#: Allowed lifecycle transitions (status_before, status_after, close_reason).
LIFECYCLE_EDGES = frozenset(
    [
        (STATUS_PENDING, STATUS_OPEN, None),
        (STATUS_PENDING, STATUS_CLOSED, REASON_REJECTED),
        (STATUS_OPEN, STATUS_CANCELLING, None),
        (STATUS_OPEN, STATUS_CLOSED, REASON_FILLED),
        (STATUS_CANCELLING, STATUS_CLOSED, REASON_CANCELED),
        (STATUS_CANCELLING, STATUS_CLOSED, REASON_FILLED),
    ]
)


@dataclass(frozen=True, slots=True)
class LatencyConfig:
    submit_ms: int = 0
    cancel_ms: int = 0

    def __post_init__(self) -> None:
        if self.submit_ms < 0 or self.cancel_ms < 0:
            raise ValueError("latencies must be >= 0")


class AgentOrder:
    """One unit-size limit order with lifecycle deadlines."""

    __slots__ = (
        "side",
        "price",
        "status",
        "submit_effective_at",
        "cancel_effective_at",
        "close_reason",
    )

    SIZE = 1.0

    def __init__(self, side: str, price: float, submit_effective_at: int):
        self.side = side
        self.price = price
        self.status = STATUS_PENDING
        self.submit_effective_at = submit_effective_at
        self.cancel_effective_at: Optional[int] = None
        self.close_reason: Optional[str] = None


@dataclass(slots=True)
class EpisodeStats:
    reward: float
    duration_ms: int
    max_abs_inventory: float
    fills: int
    round_trips: int
    done_reason: str
    steps: int  # decision points consumed
    ticks: int


@dataclass
class EpisodeResult:
    stats: EpisodeStats
    trace: List[dict]
    tick_rewards: List[Tuple[int, float]]


class ExchangeEnv:
    """Event loop over a tick stream with an RL-style decision interface.

    ``reset`` positions the stream and returns the first observation;
    ``step`` applies one joint action and advances until the next decision
    point (a tick where at least one side's order is OPEN or CLOSED).  Per
    the status-gated action-frequency rule, no decision is offered for a
    side while its order is PENDING or CANCELLING.

    Quoting is suppressed on the bid side when another buy would breach the
    inventory cap, and symmetrically on the ask side.
    """

    n_actions = 100

    def __init__(
        self,
        ticks: TickSeries,
        latency: LatencyConfig,
        i_max: float = 10.0,
        lam: float = 0.01,
        fill_mode: str = FILL_INCLUSIVE,
        max_episode_ticks: int = 50_000,
        alpha_tracker=None,
        alpha_warmup_ticks: int = 64,
        record_trace: bool = False,
        record_tick_rewards: bool = False,
    ):
        if fill_mode not in (FILL_INCLUSIVE, FILL_STRICT):
            raise ValueError(f"unknown fill mode {fill_mode!r}")
        if len(ticks) == 0:
            raise ValueError("tick stream is empty")
        self._ts: List[int] = ticks.timestamp_ms.tolist()
        self._bids: List[float] = ticks.best_bid.tolist()
        self._asks: List[float] = ticks.best_ask.tolist()
        self.latency = latency
        self.i_max = float(i_max)
        self.lam = float(lam)
        self.fill_mode = fill_mode
        self.max_episode_ticks = max_episode_ticks
        self.alpha = alpha_tracker
        self.alpha_warmup_ticks = alpha_warmup_ticks
        self.record_trace = record_trace
        self.record_tick_rewards = record_tick_rewards
        self.obs_dim = 12 + 2 * len(self.alpha.names) if self.alpha else 12

        self.trace: List[dict] = []
        self.tick_rewards: List[Tuple[int, float]] = []
        self._done = True

    # -- bookkeeping -------------------------------------------------------

    def _trace_event(
        self,
        kind: str,
        side: Optional[str],
        before: Optional[str],
        after: Optional[str],
        price: Optional[float],
        fill: bool = False,
        forced: bool = False,
    ) -> None:
        if self.record_trace:
            self.trace.append(
                {
                    "at_ms": self._now,
                    "kind": kind,
                    "side": side,
                    "before": before,
                    "after": after,
                    "price": price,
                    "fill": fill,
                    "forced": forced,
                }
            )

    # -- public order API ----------------------------------------------------

    def submit(self, side: str, price: float) -> AgentOrder:
        """Request a new unit order; PENDING until the submit latency elapses."""
        if self._slot(side) is not None:
            raise OrderRequestError(f"live order already exists on {side} side")
        order = AgentOrder(side, price, self._now + self.latency.submit_ms)
        self._set_slot(side, order)
        self._trace_event("submit", side, None, STATUS_PENDING, price)
        if self.latency.submit_ms == 0:
            self._activate(order)
        return order

    def request_cancel(self, side: str) -> None:
        """Request cancellation of the OPEN order on ``side``; the order stays
        executable until the cancel latency elapses."""
        order = self._slot(side)
        if order is None or order.status != STATUS_OPEN:
            raise OrderRequestError(f"no OPEN order on {side} side to cancel")
        order.status = STATUS_CANCELLING
        order.cancel_effective_at = self._now + self.latency.cancel_ms
        self._trace_event("cancel_request", side, STATUS_OPEN, STATUS_CANCELLING, order.price)
        if self.latency.cancel_ms == 0:
            self._finish_cancel(order)

    def _slot(self, side: str) -> Optional[AgentOrder]:
        return self._bid_slot if side == "bid" else self._ask_slot

    def _set_slot(self, side: str, order: Optional[AgentOrder]) -> None:
        if side == "bid":
            self._bid_slot = order
        else:
            self._ask_slot = order

    # -- lifecycle internals -------------------------------------------------

    def _activate(self, order: AgentOrder) -> None:
        """Validity check against the current top of book."""
        invalid = (
            order.price >= self._tob_ask
            if order.side == "bid"
            else order.price <= self._tob_bid
        )
        if invalid:
            order.status = STATUS_CLOSED
            order.close_reason = REASON_REJECTED
            self._trace_event(
                "reject", order.side, STATUS_PENDING, STATUS_CLOSED, order.price
            )
            self._set_slot(order.side, None)
        else:
            order.status = STATUS_OPEN
            self._trace_event(
                "open", order.side, STATUS_PENDING, STATUS_OPEN, order.price
            )

    def _finish_cancel(self, order: AgentOrder) -> None:
        order.status = STATUS_CLOSED
        order.close_reason = REASON_CANCELED
        self._trace_event(
            "cancel", order.side, STATUS_CANCELLING, STATUS_CLOSED, order.price
        )
        self._set_slot(order.side, None)

    def _process_activations(self, up_to_ms: int) -> None:
        """Apply pending submit/cancel activations due at or before
        ``up_to_ms``, in time order (ties: submits first, bid before ask)."""
        while True:
            due = []
            for side in ("bid", "ask"):
                order = self._slot(side)
                if order is None:
                    continue
                if order.status == STATUS_PENDING and order.submit_effective_at <= up_to_ms:
                    due.append((order.submit_effective_at, 0, side, order))
                elif (
                    order.status == STATUS_CANCELLING
                    and order.cancel_effective_at <= up_to_ms
                ):
                    due.append((order.cancel_effective_at, 1, side, order))
            if not due:
                return
            due.sort(key=lambda d: d[:3])
            at, kind, _side, order = due[0]
            self._now = at
            if kind == 0:
                self._activate(order)
            else:
                self._finish_cancel(order)

    def _check_fill(self, order: AgentOrder) -> bool:
        if order.side == "bid":
            if self.fill_mode == FILL_INCLUSIVE:
                return self._tob_ask <= order.price
            return self._tob_ask < order.price
        if self.fill_mode == FILL_INCLUSIVE:
            return self._tob_bid >= order.price
        return self._tob_bid > order.price

    def _process_tick(self, i: int) -> float:
        """Advance to tick ``i``: fills, alpha update, per-tick reward."""
        ts = self._ts[i]
        self._process_activations(ts)
        self._now = ts
        self._tob_bid = self._bids[i]
        self._tob_ask = self._asks[i]
        mid = (self._tob_bid + self._tob_ask) / 2.0
        if self.record_trace:
            self.trace.append(
                {
                    "at_ms": ts,
                    "kind": "tick",
                    "side": None,
                    "before": None,
                    "after": None,
                    "price": None,
                    "fill": False,
                    "best_bid": self._tob_bid,
                    "best_ask": self._tob_ask,
                }
            )
        for side in ("bid", "ask"):
            order = self._slot(side)
            if order is None or order.status not in (STATUS_OPEN, STATUS_CANCELLING):
                continue
            if self._check_fill(order):
                before = order.status
                order.status = STATUS_CLOSED
                order.close_reason = REASON_FILLED
                self._set_slot(side, None)
                self.portfolio = accounting.apply_fill(
                    self.portfolio, side, order.price, AgentOrder.SIZE
                )
                self._ep_fills += 1
                if side == "bid":
                    self._ep_buys += 1
                else:
                    self._ep_sells += 1
                self._trace_event("fill", side, before, STATUS_CLOSED, order.price, fill=True)
                if self.alpha is not None:
                    self.alpha.on_agent_fill(ts, side, order.price, AgentOrder.SIZE)

        inv = self.portfolio.inventory
        if inv != 0.0:
            self._had_nonzero = True
            if abs(inv) > self._max_abs_inv:
                self._max_abs_inv = abs(inv)
        reward = accounting.step_reward_total(
            self._port_prev, self.portfolio, self._mid_prev, mid
        )
        self._port_prev = self.portfolio
        self._mid_prev = mid
        if self.alpha is not None:
            self.alpha.on_tick(ts, self._tob_bid, self._tob_ask)
        if self.record_tick_rewards:
            self.tick_rewards.append((ts, reward))
        self._ep_reward += reward
        self._ep_ticks += 1
        return reward

    # -- episode interface ----------------------------------------------------

    def reset(self, start_index: int = 0) -> Observation:
        if start_index >= len(self._ts):
            raise ValueError("start_index beyond the tick stream")
        self.portfolio = accounting.PortfolioState.flat(self.i_max, self.lam)
        self._bid_slot: Optional[AgentOrder] = None
        self._ask_slot: Optional[AgentOrder] = None
        self._i = start_index
        self._now = self._ts[start_index]
        self._tob_bid = self._bids[start_index]
        self._tob_ask = self._asks[start_index]
        self._mid_prev = (self._tob_bid + self._tob_ask) / 2.0
        self._port_prev = self.portfolio
        self._had_nonzero = False
        self._max_abs_inv = 0.0
        self._ep_reward = 0.0
        self._ep_fills = 0
        self._ep_buys = 0
        self._ep_sells = 0
        self._ep_ticks = 0
        self._ep_steps = 0
        self._ep_t0 = self._ts[start_index]
        self._done = False
        self.done_reason: Optional[str] = None
        if self.alpha is not None:
            self.alpha.reset()
            for j in range(max(0, start_index - self.alpha_warmup_ticks), start_index + 1):
                self.alpha.on_tick(self._ts[j], self._bids[j], self._asks[j])
        return self.observation()

    def observation(self) -> Observation:
        bid, ask = self._bid_slot, self._ask_slot
        view = MarketView(
            best_bid=self._tob_bid,
            best_ask=self._tob_ask,
            bid_status=bid.status if bid is not None else STATUS_CLOSED,
            bid_price=bid.price if bid is not None else None,
            ask_status=ask.status if ask is not None else STATUS_CLOSED,
            ask_price=ask.price if ask is not None else None,
        )
        alpha_values = self.alpha.values(self._now) if self.alpha is not None else None
        return encode_observation(
            view,
            self.portfolio.inventory,
            self.i_max,
            self.portfolio.entry_price,
            alpha=alpha_values,
            alpha_names=self.alpha.names if self.alpha is not None else (),
        )

    def _side_actionable(self, side: str) -> bool:
        order = self._slot(side)
        return order is None or order.status == STATUS_OPEN

    def any_actionable(self) -> bool:
        return self._side_actionable("bid") or self._side_actionable("ask")

    def _apply_action(self, action: ActionPair) -> None:
        p_bid, p_ask = decode_action(action, self._tob_bid, self._tob_ask)
        inv = self.portfolio.inventory
        for side, target in (("bid", p_bid), ("ask", p_ask)):
            if not self._side_actionable(side):
                continue
            order = self._slot(side)
            if order is None:
                capped = (
                    inv + AgentOrder.SIZE > self.i_max + 1e-12
                    if side == "bid"
                    else inv - AgentOrder.SIZE < -self.i_max - 1e-12
                )
                if capped:
                    continue
                self._trace_event("action", side, STATUS_CLOSED, STATUS_CLOSED, target)
                self.submit(side, target)
            else:
                self._trace_event("action", side, STATUS_OPEN, STATUS_OPEN, target)
                if target != order.price:
                    self.request_cancel(side)

    def _force_close_orders(self) -> None:
        """Episode-boundary closure through legal lifecycle edges: OPEN
        orders are cancelled with zero latency, PENDING orders are closed as
        rejected (they never reached the book)."""
        for side in ("bid", "ask"):
            order = self._slot(side)
            if order is None:
                continue
            if order.status == STATUS_PENDING:
                order.status = STATUS_CLOSED
                order.close_reason = REASON_REJECTED
                self._trace_event(
                    "reject", side, STATUS_PENDING, STATUS_CLOSED, order.price, forced=True
                )
                self._set_slot(side, None)
            elif order.status == STATUS_OPEN:
                order.status = STATUS_CANCELLING
                order.cancel_effective_at = self._now
                self._trace_event(
                    "cancel_request",
                    side,
                    STATUS_OPEN,
                    STATUS_CANCELLING,
                    order.price,
                    forced=True,
                )
                self._finish_cancel(order)
            elif order.status == STATUS_CANCELLING:
                self._finish_cancel(order)

    def step(self, action_index: Optional[int]) -> Tuple[Observation, float, bool, dict]:
        """Apply one joint action at the current decision tick, then advance
        to the next decision point or episode end.  Returns the accumulated
        per-tick reward in between.  A None action holds both sides."""
        if self._done:
            raise OrderRequestError("episode is done; call reset()")
        if action_index is not None:
            self._apply_action(ActionPair.from_index(action_index))
        self._ep_steps += 1
        accumulated = 0.0
        info: dict = {}
        while True:
            if self._i + 1 >= len(self._ts):
                self._done = True
                self.done_reason = DONE_TRUNCATED
                break
            self._i += 1
            accumulated += self._process_tick(self._i)
            if self._had_nonzero and self.portfolio.inventory == 0.0:
                self._done = True
                self.done_reason = DONE_FLAT
                break
            if self._ep_ticks >= self.max_episode_ticks:
                self._done = True
                self.done_reason = DONE_CUTOFF
                break
            if self.any_actionable():
                break
        if self._done:
            self._force_close_orders()
            info["stats"] = self.episode_stats()
        return self.observation(), accumulated, self._done, info

    def advance_ticks(self, n: int = 1) -> List[float]:
        """Advance n ticks with no agent consultation (diagnostics/replay);
        activations and fills still happen.  Returns the per-tick rewards."""
        rewards = []
        for _ in range(n):
            if self._i + 1 >= len(self._ts):
                break
            self._i += 1
            rewards.append(self._process_tick(self._i))
        return rewards

    def episode_stats(self) -> EpisodeStats:
        return EpisodeStats(
            reward=self._ep_reward,
            duration_ms=self._now - self._ep_t0,
            max_abs_inventory=self._max_abs_inv,
            fills=self._ep_fills,
            round_trips=min(self._ep_buys, self._ep_sells),
            done_reason=self.done_reason or "",
            steps=self._ep_steps,
            ticks=self._ep_ticks,
        )

    @property
    def cursor(self) -> int:
        return self._i

    @property
    def done(self) -> bool:
        return self._done


def run_event_loop(
    ticks: TickSeries,
    policy,
    latency: LatencyConfig,
    rng=None,
    start_index: int = 0,
    record_trace: bool = True,
    **env_kwargs,
) -> EpisodeResult:
    """Drive one full episode with ``policy`` (anything with
    ``act(Observation, rng) -> ActionPair``)."""
    env = ExchangeEnv(
        ticks,
        latency,
        record_trace=record_trace,
        record_tick_rewards=True,
        **env_kwargs,
    )
    obs = env.reset(start_index)
    done = False
    while not done:
        action = policy.act(obs, rng)
        obs, _, done, info = env.step(None if action is None else action.index)
    return EpisodeResult(
        stats=info["stats"], trace=env.trace, tick_rewards=env.tick_rewards
    )
