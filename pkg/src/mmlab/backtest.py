"""Episode-level strategy evaluation and latency sweeps.

A backtest runs consecutive episodes over one tick stream: each episode
starts flat and ends when inventory returns to zero (or the stream runs
out); the next episode begins on the following tick.  The cumulative reward
series is sampled per tick, and per-episode rewards are accumulated with the
same float additions as the running total so the two reconcile exactly.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .env import DONE_TRUNCATED, EpisodeStats, ExchangeEnv, LatencyConfig
from .marketsim import TickSeries
from .seeding import substream

logger = logging.getLogger(__name__)


@dataclass
class BacktestResult:
    episodes: List[EpisodeStats]
    cumulative: List[Tuple[int, float]]  # (timestamp_ms, cumulative reward)
    total_reward: float
    fills: int
    trace: Optional[List[dict]] = None

    @property
    def mean_episode_reward(self) -> float:
        if not self.episodes:
            return float("nan")
        return float(np.mean([e.reward for e in self.episodes]))

    @property
    def mean_max_abs_inventory(self) -> float:
        if not self.episodes:
            return float("nan")
        return float(np.mean([e.max_abs_inventory for e in self.episodes]))


@dataclass
class SweepResult:
    axis: str
    latency_ms: int
    total_reward: float
    episodes: List[EpisodeStats]

    @property
    def mean_max_abs_inventory(self) -> float:
        if not self.episodes:
            return float("nan")
        return float(np.mean([e.max_abs_inventory for e in self.episodes]))


def run_backtest(
    policy,
    ticks: TickSeries,
    latency: LatencyConfig,
    lam: float = 0.01,
    i_max: float = 10.0,
    seed: int = 0,
    fill_mode: str = "inclusive",
    alpha_tracker=None,
    max_episode_ticks: int = 50_000,
    record_trace: bool = False,
) -> BacktestResult:
    """Deterministic function of (policy, ticks, latency, lam, i_max, seed)."""
    env = ExchangeEnv(
        ticks,
        latency,
        i_max=i_max,
        lam=lam,
        fill_mode=fill_mode,
        max_episode_ticks=max_episode_ticks,
        alpha_tracker=alpha_tracker,
        record_trace=record_trace,
        record_tick_rewards=True,
    )
    rng = substream(seed, "backtest-policy")
    episodes: List[EpisodeStats] = []
    cumulative: List[Tuple[int, float]] = []
    base = 0.0
    fills = 0
    start = 0
    n_ticks = len(ticks)
    while start < n_ticks:
        obs = env.reset(start)
        tick_mark = len(env.tick_rewards)
        done = False
        info: dict = {}
        while not done:
            action = policy.act(obs, rng)
            obs, _, done, info = env.step(None if action is None else action.index)
        stats: EpisodeStats = info["stats"]
        # per-tick cumulative series, grouped exactly like the episode sum
        running = 0.0
        for ts, r in env.tick_rewards[tick_mark:]:
            running += r
            cumulative.append((ts, base + running))
        base += stats.reward
        episodes.append(stats)
        fills += stats.fills
        if stats.done_reason == DONE_TRUNCATED:
            break
        start = env.cursor + 1
    return BacktestResult(
        episodes=episodes,
        cumulative=cumulative,
        total_reward=base,
        fills=fills,
        trace=env.trace if record_trace else None,
    )


def latency_sweep(
    policy,
    ticks: TickSeries,
    axis: str,
    values_ms: Sequence[int],
    base_latency: LatencyConfig = LatencyConfig(0, 0),
    **backtest_kwargs,
) -> Tuple[List[SweepResult], Optional[float]]:
    """One backtest per latency value, everything else held fixed.

    Returns the sweep points plus the Spearman rank correlation between
    latency and cumulative reward (None for degenerate sweeps); rank
    correlation because the claim under test is monotone direction, not
    linearity.
    """
    if axis not in ("submit", "cancel"):
        raise ValueError(f"axis must be 'submit' or 'cancel', got {axis!r}")
    if not values_ms:
        raise ValueError("values_ms must be non-empty")
    results: List[SweepResult] = []
    for v in values_ms:
        latency = (
            LatencyConfig(int(v), base_latency.cancel_ms)
            if axis == "submit"
            else LatencyConfig(base_latency.submit_ms, int(v))
        )
        bt = run_backtest(policy, ticks, latency, **backtest_kwargs)
        results.append(SweepResult(axis, int(v), bt.total_reward, bt.episodes))
        logger.info(
            "sweep %s=%dms: total reward %.4f over %d episodes",
            axis,
            v,
            bt.total_reward,
            len(bt.episodes),
        )
    rho: Optional[float] = None
    if len(results) >= 2:
        from scipy import stats as scipy_stats

        rewards = [r.total_reward for r in results]
        if len(set(rewards)) > 1:
            rho = float(scipy_stats.spearmanr([r.latency_ms for r in results], rewards).statistic)
    return results, rho


# -- reporting ---------------------------------------------------------------

_EPISODE_FIELDS = (
    "episode",
    "reward",
    "duration_ms",
    "max_abs_inventory",
    "fills",
    "round_trips",
    "done_reason",
    "steps",
    "ticks",
)


def write_episode_csv(episodes: Sequence[EpisodeStats], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EPISODE_FIELDS)
        for i, e in enumerate(episodes):
            writer.writerow(
                [
                    i,
                    repr(e.reward),
                    e.duration_ms,
                    repr(e.max_abs_inventory),
                    e.fills,
                    e.round_trips,
                    e.done_reason,
                    e.steps,
                    e.ticks,
                ]
            )


def write_cumulative_csv(series: Sequence[Tuple[int, float]], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("timestamp_ms,cumulative_reward\n")
        for ts, v in series:
            fh.write(f"{ts},{v!r}\n")


def _quartiles(xs: Sequence[float]) -> Tuple[float, float, float]:
    arr = np.sort(np.asarray(xs, dtype=np.float64))
    return (
        float(np.percentile(arr, 25)),
        float(np.percentile(arr, 50)),
        float(np.percentile(arr, 75)),
    )


def report(result: BacktestResult, out_dir: str, name: str = "backtest") -> List[str]:
    """Write episode stats CSV, cumulative CSV and SVG summaries."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    ep_path = os.path.join(out_dir, f"{name}_episodes.csv")
    write_episode_csv(result.episodes, ep_path)
    paths.append(ep_path)
    cum_path = os.path.join(out_dir, f"{name}_cumulative.csv")
    write_cumulative_csv(result.cumulative, cum_path)
    paths.append(cum_path)

    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "mmlab"
    import matplotlib.pyplot as plt

    if result.cumulative:
        fig, ax = plt.subplots(figsize=(8, 4))
        ts = [t for t, _ in result.cumulative]
        cum = [v for _, v in result.cumulative]
        ax.plot(np.asarray(ts) / 3.6e6, cum, lw=0.8)
        ax.set_xlabel("hours")
        ax.set_ylabel("cumulative reward")
        ax.set_title("Cumulative reward")
        curve_path = os.path.join(out_dir, f"{name}_reward_curve.svg")
        fig.savefig(curve_path, metadata={"Date": None})
        plt.close(fig)
        paths.append(curve_path)

    if result.episodes:
        rewards = [e.reward for e in result.episodes]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.boxplot([rewards], showmeans=True, meanline=True, labels=["episode reward"])
        q1, q2, q3 = _quartiles(rewards)
        ax.set_title(f"Episode rewards (q1={q1:.3g}, median={q2:.3g}, q3={q3:.3g})")
        box_path = os.path.join(out_dir, f"{name}_episode_boxplot.svg")
        fig.savefig(box_path, metadata={"Date": None})
        plt.close(fig)
        paths.append(box_path)
    return paths


def write_sweep_csv(
    results: Sequence[SweepResult], rho: Optional[float], path: str
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["axis", "latency_ms", "total_reward", "mean_max_abs_inventory", "episodes", "spearman_rho"]
        )
        for r in results:
            writer.writerow(
                [
                    r.axis,
                    r.latency_ms,
                    repr(r.total_reward),
                    repr(r.mean_max_abs_inventory),
                    len(r.episodes),
                    "" if rho is None else repr(rho),
                ]
            )
