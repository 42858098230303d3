"""Microstructure alpha signals and their predictive-power evaluation.

Six signals: two order-book-shape imbalances (price-distance and quantity),
three trade/flow imbalances (volume, count, submission-minus-cancellation)
and the trailing return.  Undefined values (exhausted depth, zero or
sign-degenerate denominators, missing history) are reported as ``None`` and
propagate; absence of trades is information, not a zero.

Predictive power is measured by univariate OLS of the forward return on each
signal, compared through R-squared across horizons.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .book import FlowCounters, OrderBook, RollingFlow
from .errors import SideExhaustedError, WindowCoverageError
from .messages import SIDE_ASK, SIDE_BID, BookSnapshot, Level3Message


@dataclass
class FeatureConfig:
    """Grids and windows; all strictly increasing and positive."""

    q_grid: Tuple[float, ...] = (10.0, 20.0, 40.0, 80.0)
    d_grid: Tuple[float, ...] = (5e-4, 10e-4, 20e-4, 40e-4)  # fractional distances
    deltas_flow: Tuple[int, ...] = (100, 200, 500, 1000, 2000)  # ms
    deltas_pret: Tuple[int, ...] = (200, 400, 600, 800, 1000)  # ms
    horizons: Tuple[int, ...] = (100, 200, 500, 1000, 2000)  # ms
    sample_interval_ms: int = 100

    def __post_init__(self) -> None:
        for name in ("q_grid", "d_grid", "deltas_flow", "deltas_pret", "horizons"):
            grid = getattr(self, name)
            if not grid or any(g <= 0 for g in grid):
                raise ValueError(f"{name} must be non-empty and positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")

    def column_names(self) -> List[str]:
        cols = ["oid", "oiq"]
        for d in self.deltas_flow:
            cols.extend((f"tiq_{d}", f"tic_{d}", f"tio_{d}"))
        for d in self.deltas_pret:
            cols.append(f"pret_{d}")
        return cols


def oid(book: OrderBook, q_grid: Sequence[float]) -> Optional[float]:
    """Mean price-distance imbalance: how much farther the ask side's
    cumulative-depth price sits from the touch than the bid side's."""
    terms = []
    for q in q_grid:
        try:
            pa_q = book.depth_price_at_quantity(SIDE_ASK, q)
            pb_q = book.depth_price_at_quantity(SIDE_BID, q)
            pa_1 = book.depth_price_at_quantity(SIDE_ASK, 1.0)
            pb_1 = book.depth_price_at_quantity(SIDE_BID, 1.0)
        except SideExhaustedError:
            continue  # this grid point outruns the book; skip it
        dist_ask = pa_q - pa_1
        dist_bid = pb_1 - pb_q
        if dist_bid == 0.0:
            continue
        terms.append(dist_ask / dist_bid - 1.0)
    if not terms:
        return None
    return sum(terms) / len(terms)


def oiq(book: OrderBook, d_grid: Sequence[float]) -> Optional[float]:
    """Mean quantity imbalance within fractional distances of the touch."""
    terms = []
    for d in d_grid:
        qty_ask = book.quantity_within_distance(SIDE_ASK, d)
        qty_bid = book.quantity_within_distance(SIDE_BID, d)
        if qty_bid == 0.0:
            continue
        terms.append(qty_ask / qty_bid - 1.0)
    if not terms:
        return None
    return sum(terms) / len(terms)


def tiq(counters: FlowCounters) -> Optional[float]:
    """Volume imbalance of aggressive sells vs buys, in [-1, 1]."""
    s, b = counters.traded_sell_qty, counters.traded_buy_qty
    denom = s + b
    if denom == 0.0:
        return None
    return (s - b) / denom


def tic(counters: FlowCounters) -> Optional[float]:
    """Trade-count imbalance of aggressive sells vs buys, in [-1, 1]."""
    s, b = counters.sell_trade_count, counters.buy_trade_count
    denom = s + b
    if denom == 0:
        return None
    return (s - b) / denom


def tio(counters: FlowCounters) -> Optional[float]:
    """Net submission-minus-cancellation imbalance, ask side vs bid side."""
    net_ask = counters.submitted_ask_qty - counters.canceled_ask_qty
    net_bid = counters.submitted_bid_qty - counters.canceled_bid_qty
    denom = net_ask + net_bid
    if denom <= 0.0:
        return None
    return (net_ask - net_bid) / denom


class MidHistory:
    """Timestamped mid-price history with last-at-or-before lookup."""

    def __init__(self):
        self._ts: List[int] = []
        self._mid: List[float] = []

    def push(self, ts: int, mid: float) -> None:
        self._ts.append(ts)
        self._mid.append(mid)

    def at_or_before(self, ts: int) -> Optional[float]:
        i = bisect_right(self._ts, ts)
        if i == 0:
            return None
        return self._mid[i - 1]

    def last(self) -> Optional[float]:
        return self._mid[-1] if self._mid else None


def pret(history: MidHistory, now_ms: int, delta_ms: int) -> Optional[float]:
    """Trailing return over ``delta_ms``; None while history is too short."""
    p_now = history.at_or_before(now_ms)
    p_then = history.at_or_before(now_ms - delta_ms)
    if p_now is None or p_then is None:
        return None
    return p_now / p_then - 1.0


# -- OLS evaluation ----------------------------------------------------------


@dataclass
class RegressionReport:
    feature: str
    horizon_ms: int
    alpha_hat: Optional[float]
    beta_hat: Optional[float]
    r_squared: Optional[float]
    n_samples: int
    n_excluded: int  # samples dropped for undefined feature values


def evaluate_predictor(
    samples: Iterable[Tuple[Optional[float], float]],
    feature: str = "",
    horizon_ms: int = 0,
) -> RegressionReport:
    """Closed-form univariate OLS of forward return on the feature.

    Undefined-feature samples are excluded (and counted); zero feature
    variance yields an undefined-R-squared report rather than an error.
    """
    xs, ys = [], []
    excluded = 0
    for x, y in samples:
        if x is None or not math.isfinite(x):
            excluded += 1
            continue
        xs.append(x)
        ys.append(y)
    n = len(xs)
    if n < 3:
        return RegressionReport(feature, horizon_ms, None, None, None, n, excluded)
    x = np.asarray(xs)
    y = np.asarray(ys)
    x_mean = float(np.mean(x))
    y_mean = float(np.mean(y))
    sxx = float(np.sum((x - x_mean) ** 2))
    sxy = float(np.sum((x - x_mean) * (y - y_mean)))
    sst = float(np.sum((y - y_mean) ** 2))
    if sxx == 0.0:
        return RegressionReport(feature, horizon_ms, None, None, None, n, excluded)
    beta = sxy / sxx
    alpha = y_mean - beta * x_mean
    ssr = float(np.sum((y - alpha - beta * x) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0.0 else None
    return RegressionReport(feature, horizon_ms, alpha, beta, r2, n, excluded)


def beta_standard_error(x: Sequence[float], y: Sequence[float]) -> float:
    """Textbook OLS slope standard error, for planted-coefficient checks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 samples")
    x_mean = x.mean()
    sxx = float(np.sum((x - x_mean) ** 2))
    beta = float(np.sum((x - x_mean) * (y - y.mean())) / sxx)
    alpha = float(y.mean() - beta * x_mean)
    resid = y - alpha - beta * x
    s2 = float(np.sum(resid**2)) / (n - 2)
    return math.sqrt(s2 / sxx)


# -- streaming extraction over a level-3 log ---------------------------------


@dataclass
class FeatureRow:
    timestamp_ms: int
    values: Dict[str, Optional[float]]


def compute_features(
    snapshot: BookSnapshot,
    messages: Iterable[Level3Message],
    config: Optional[FeatureConfig] = None,
    price_decimals: int = 2,
) -> List[FeatureRow]:
    """Single pass over a log emitting one row per sample interval.

    Flow windows that extend before the log start are reported as undefined
    rather than raising: the first covered sample is simply later for the
    longer windows.  Every value at time t uses data with timestamp <= t
    only.
    """
    cfg = config or FeatureConfig()
    book = OrderBook.from_snapshot(snapshot, price_decimals=price_decimals)
    history = MidHistory()
    flows: Dict[int, RollingFlow] = {}
    rows: List[FeatureRow] = []
    log_start: Optional[int] = None
    next_sample: Optional[int] = None

    def emit(ts: int) -> None:
        values: Dict[str, Optional[float]] = {
            "oid": oid(book, cfg.q_grid),
            "oiq": oiq(book, cfg.d_grid),
        }
        for d in cfg.deltas_flow:
            try:
                counters = flows[d].counters_at(ts)
            except WindowCoverageError:
                values[f"tiq_{d}"] = None
                values[f"tic_{d}"] = None
                values[f"tio_{d}"] = None
                continue
            values[f"tiq_{d}"] = tiq(counters)
            values[f"tic_{d}"] = tic(counters)
            values[f"tio_{d}"] = tio(counters)
        for d in cfg.deltas_pret:
            values[f"pret_{d}"] = pret(history, ts, d)
        rows.append(FeatureRow(ts, values))

    for msg in messages:
        if log_start is None:
            log_start = msg.timestamp_ms
            next_sample = msg.timestamp_ms + cfg.sample_interval_ms
            for d in cfg.deltas_flow:
                flows[d] = RollingFlow(d, log_start)
        while next_sample is not None and msg.timestamp_ms > next_sample:
            emit(next_sample)
            next_sample += cfg.sample_interval_ms
        if not book.apply_message(msg):
            continue
        for flow in flows.values():
            flow.push(msg)
        bb, ba = book.best_bid(), book.best_ask()
        if bb is not None and ba is not None:
            history.push(msg.timestamp_ms, (bb + ba) / 2.0)
    if next_sample is not None and log_start is not None:
        emit(next_sample)
    return rows


def forward_return(history: MidHistory, ts: int, horizon_ms: int) -> Optional[float]:
    p_now = history.at_or_before(ts)
    p_fwd = history.at_or_before(ts + horizon_ms)
    if p_now is None or p_fwd is None:
        return None
    return p_fwd / p_now - 1.0


def evaluate_feature_table(
    rows: Sequence[FeatureRow],
    history: MidHistory,
    horizons: Sequence[int],
    max_ts: Optional[int] = None,
) -> List[RegressionReport]:
    """Regress every feature column on the forward return at each horizon.

    Samples whose horizon extends past the observed data (``max_ts``) are
    dropped so forward returns never peek beyond the log.
    """
    reports = []
    columns = sorted({name for row in rows for name in row.values})
    for horizon in horizons:
        for col in columns:
            samples = []
            for row in rows:
                if max_ts is not None and row.timestamp_ms + horizon > max_ts:
                    continue
                fret = forward_return(history, row.timestamp_ms, horizon)
                if fret is None:
                    continue
                samples.append((row.values.get(col), fret))
            reports.append(evaluate_predictor(samples, feature=col, horizon_ms=horizon))
    return reports


# -- online tracker for the RL observation block ------------------------------


class OnlineAlphaTracker:
    """Feeds the alpha block of the RL observation while an episode runs.

    Over a pure top-of-book stream the full-book and full-flow signals are
    unavailable, so only the trailing return plus the trade imbalances built
    from the agent's own executions are live; the remaining names are always
    reported undefined.  (A bid fill means the market sold to us, so it
    counts as aggressive sell flow.)
    """

    def __init__(
        self,
        names: Sequence[str] = ("tiq_200", "tic_200", "pret_200", "pret_1000"),
        flow_window_ms: int = 200,
    ):
        self.names = tuple(names)
        self.flow_window_ms = flow_window_ms
        self._pret_deltas = sorted(
            int(n.split("_")[1]) for n in self.names if n.startswith("pret_")
        )
        self.reset()

    def reset(self) -> None:
        self._history = MidHistory()
        self._fills: deque = deque()  # (ts, side, qty)

    def on_tick(self, ts: int, best_bid: float, best_ask: float) -> None:
        self._history.push(ts, (best_bid + best_ask) / 2.0)

    def on_agent_fill(self, ts: int, side: str, price: float, qty: float) -> None:
        self._fills.append((ts, side, qty))

    def values(self, now_ms: int) -> Dict[str, Optional[float]]:
        cutoff = now_ms - self.flow_window_ms
        while self._fills and self._fills[0][0] <= cutoff:
            self._fills.popleft()
        sell_qty = buy_qty = 0.0
        sell_n = buy_n = 0
        for _, side, qty in self._fills:
            if side == "bid":  # our bid was hit: aggressive sell
                sell_qty += qty
                sell_n += 1
            else:
                buy_qty += qty
                buy_n += 1
        out: Dict[str, Optional[float]] = {}
        for name in self.names:
            if name.startswith("pret_"):
                out[name] = pret(self._history, now_ms, int(name.split("_")[1]))
            elif name.startswith("tiq"):
                denom = sell_qty + buy_qty
                out[name] = (sell_qty - buy_qty) / denom if denom > 0 else None
            elif name.startswith("tic"):
                denom = sell_n + buy_n
                out[name] = (sell_n - buy_n) / denom if denom > 0 else None
            else:
                out[name] = None  # needs full book/flow data
        return out
