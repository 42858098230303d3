"""Synthetic top-of-book tick generation and parameter calibration.

The generator draws three quantities per tick:

* the inter-tick interval, log-normal in milliseconds,
* a mid-price random-walk factor ``1 + dP * dT`` with ``dP`` zero-mean
  normal (per-ms scaling, read literally; recorded here so the calibration
  oracle matches),
* a fractional spread, log-normal and dimensionless.

Timestamps are integer milliseconds (intervals rounded up, minimum 1 ms) so
simulated and reconstructed ticks share one clock format; the integer
interval is also the one used in the mid-price step, which keeps the
calibration round-trip free of discretisation bias for the price leg.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterator, Sequence

import numpy as np

from .book import TopOfBook
from .errors import CalibrationError

_BATCH = 1 << 14


@dataclass
class SimParams:
    """Five distribution parameters plus the initial mid and a seed."""

    dt_mu: float  # log-space mean of the inter-tick interval (ms)
    dt_sigma: float  # log-space sd of the interval
    dp_sigma: float  # sd of the price-change factor, per ms
    spread_mu: float  # log-space mean of the fractional spread
    spread_sigma: float  # log-space sd of the spread
    p0: float  # initial mid price
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dt_sigma < 0 or self.dp_sigma < 0 or self.spread_sigma < 0:
            raise ValueError("sigma parameters must be >= 0")
        if self.p0 <= 0:
            raise ValueError("p0 must be > 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json_file(cls, path: str) -> "SimParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))


@dataclass
class TickSeries:
    """Column-oriented tick store shared by the simulator, the reconstructor
    output and the exchange environment."""

    timestamp_ms: np.ndarray  # int64
    best_bid: np.ndarray  # float64
    best_ask: np.ndarray  # float64

    def __post_init__(self) -> None:
        self.timestamp_ms = np.asarray(self.timestamp_ms, dtype=np.int64)
        self.best_bid = np.asarray(self.best_bid, dtype=np.float64)
        self.best_ask = np.asarray(self.best_ask, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.timestamp_ms)

    @property
    def mid(self) -> np.ndarray:
        return (self.best_bid + self.best_ask) / 2.0

    def tick(self, i: int) -> TopOfBook:
        return TopOfBook(
            int(self.timestamp_ms[i]), float(self.best_bid[i]), float(self.best_ask[i])
        )

    def __iter__(self) -> Iterator[TopOfBook]:
        for i in range(len(self)):
            yield self.tick(i)

    def slice(self, start: int, stop: int) -> "TickSeries":
        return TickSeries(
            self.timestamp_ms[start:stop],
            self.best_bid[start:stop],
            self.best_ask[start:stop],
        )

    @classmethod
    def from_ticks(cls, ticks: Sequence[TopOfBook]) -> "TickSeries":
        return cls(
            np.array([t.timestamp_ms for t in ticks], dtype=np.int64),
            np.array([t.best_bid for t in ticks], dtype=np.float64),
            np.array([t.best_ask for t in ticks], dtype=np.float64),
        )

    def to_csv(self, path: str) -> None:
        ts = self.timestamp_ms.tolist()
        bids = self.best_bid.tolist()
        asks = self.best_ask.tolist()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("timestamp_ms,best_bid,best_ask\n")
            for t, b, a in zip(ts, bids, asks):
                fh.write(f"{t},{b!r},{a!r}\n")

    @classmethod
    def from_csv(cls, path: str) -> "TickSeries":
        ts, bids, asks = [], [], []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "timestamp_ms,best_bid,best_ask":
                raise ValueError(f"unexpected tick CSV header: {header!r}")
            for line in fh:
                t, b, a = line.rstrip("\n").split(",")
                ts.append(int(t))
                bids.append(float(b))
                asks.append(float(a))
        return cls(np.array(ts, np.int64), np.array(bids), np.array(asks))


def sample_interval_raw(params: SimParams, rng: np.random.Generator) -> float:
    """One inter-tick interval draw from the log-normal law, in ms."""
    return math.exp(params.dt_mu + params.dt_sigma * rng.standard_normal())


def sample_interval(params: SimParams, rng: np.random.Generator) -> int:
    """One inter-tick interval on the integer-ms clock (rounded up, >= 1)."""
    return max(1, math.ceil(sample_interval_raw(params, rng)))


def step_mid(
    p_prev: float, dt_ms: float, params: SimParams, rng: np.random.Generator
) -> float:
    """Advance the mid price one tick; the walk factor is resampled on the
    (practically unreachable) event that it would be non-positive."""
    if p_prev <= 0:
        raise ValueError("p_prev must be > 0")
    while True:
        factor = 1.0 + rng.normal(0.0, params.dp_sigma) * dt_ms
        if factor > 0.0:
            return p_prev * factor


def sample_spread(params: SimParams, rng: np.random.Generator) -> float:
    return math.exp(params.spread_mu + params.spread_sigma * rng.standard_normal())


def generate(params: SimParams, duration_ms: int) -> TickSeries:
    """Generate ticks with cumulative timestamps <= duration_ms.

    Fully determined by ``params.seed``; draws happen in fixed-size batches
    in the order (intervals, walk factors, spreads).
    """
    if duration_ms <= 0:
        raise ValueError("duration_ms must be > 0")
    rng = np.random.default_rng(params.seed)

    ts_parts = []
    mid_parts = []
    spread_parts = []
    t_cum = 0
    p_cur = params.p0
    while t_cum < duration_ms:
        dts = np.exp(params.dt_mu + params.dt_sigma * rng.standard_normal(_BATCH))
        dts = np.maximum(1, np.ceil(dts)).astype(np.int64)
        dps = rng.normal(0.0, params.dp_sigma, _BATCH)
        factors = 1.0 + dps * dts
        bad = factors <= 0.0
        while bad.any():
            redraw = rng.normal(0.0, params.dp_sigma, int(bad.sum()))
            factors[bad] = 1.0 + redraw * dts[bad]
            bad = factors <= 0.0
        spreads = np.exp(
            params.spread_mu + params.spread_sigma * rng.standard_normal(_BATCH)
        )

        stamps = t_cum + np.cumsum(dts)
        mids = p_cur * np.cumprod(factors)
        keep = stamps <= duration_ms
        n_keep = int(keep.sum())
        ts_parts.append(stamps[:n_keep])
        mid_parts.append(mids[:n_keep])
        spread_parts.append(spreads[:n_keep])
        if n_keep < _BATCH:
            break
        t_cum = int(stamps[-1])
        p_cur = float(mids[-1])

    ts = np.concatenate(ts_parts) if ts_parts else np.empty(0, np.int64)
    mid = np.concatenate(mid_parts) if mid_parts else np.empty(0)
    spread = np.concatenate(spread_parts) if spread_parts else np.empty(0)
    return TickSeries(ts, mid * (1.0 - spread / 2.0), mid * (1.0 + spread / 2.0))


def calibrate(ticks: TickSeries) -> SimParams:
    """Fit the five parameters from observed ticks.

    Interval and spread are fit as log-normals; the walk sd is the sd of the
    per-interval normalised mid change.  ``p0`` is the first observed mid.
    """
    if len(ticks) < 2:
        raise CalibrationError(f"need at least 2 ticks, got {len(ticks)}")
    dts = np.diff(ticks.timestamp_ms).astype(np.float64)
    if (dts <= 0).any():
        raise CalibrationError("non-positive inter-tick interval in input")
    spreads = (ticks.best_ask - ticks.best_bid) / ticks.best_bid
    if (spreads <= 0).any():
        raise CalibrationError("non-positive spread in input")
    mid = ticks.mid
    dp = (mid[1:] / mid[:-1] - 1.0) / dts

    log_dt = np.log(dts)
    log_spread = np.log(spreads)
    return SimParams(
        dt_mu=float(np.mean(log_dt)),
        dt_sigma=float(np.std(log_dt)),
        dp_sigma=float(np.std(dp)),
        spread_mu=float(np.mean(log_spread)),
        spread_sigma=float(np.std(log_spread)),
        p0=float(mid[0]),
        seed=0,
    )
