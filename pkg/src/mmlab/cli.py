"""Single entry point: record, reconstruct, simulate, calibrate, features,
predict-eval, train, backtest, sweep.

Exit codes: 0 success, 1 failed input invariant (message names the module),
2 usage error (argparse).  Every run writes a manifest for reproducibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Dict, List, Optional

from . import __version__
from .config import RunConfig, build_manifest, write_manifest
from .errors import MmlabError

logger = logging.getLogger(__name__)


def _out_manifest(config: RunConfig, inputs: Dict[str, str], out_dir: str) -> None:
    write_manifest(build_manifest(config, inputs), out_dir)


def cmd_record(args: argparse.Namespace, config: RunConfig) -> int:
    from .recorder import record_session

    summary = record_session(args.feed, args.snapshot, args.out, args.duration)
    _out_manifest(config, {}, args.out)
    print(
        f"recorded {summary.message_count} messages "
        f"(sequences {summary.first_sequence}..{summary.last_sequence}, "
        f"{summary.gap_count} gaps)"
    )
    return 0


def cmd_reconstruct(args: argparse.Namespace, config: RunConfig) -> int:
    from .book import iter_top_of_book
    from .messages import load_snapshot, replay_log

    snapshot = load_snapshot(args.snapshot)
    out_dir = os.path.dirname(os.path.abspath(args.emit_ticks)) or "."
    n = 0
    with open(args.emit_ticks, "w", encoding="utf-8") as fh:
        fh.write("timestamp_ms,best_bid,best_ask\n")
        for tick in iter_top_of_book(
            snapshot, replay_log(args.log), price_decimals=args.price_decimals
        ):
            fh.write(f"{tick.timestamp_ms},{tick.best_bid!r},{tick.best_ask!r}\n")
            n += 1
    _out_manifest(config, {"snapshot": args.snapshot, "log": args.log}, out_dir)
    print(f"emitted {n} ticks to {args.emit_ticks}")
    return 0


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    from .marketsim import SimParams, generate

    if args.params:
        params = SimParams.from_json_file(args.params)
    else:
        s = config.sim
        params = SimParams(
            s.dt_mu, s.dt_sigma, s.dp_sigma, s.spread_mu, s.spread_sigma, s.p0,
            seed=config.seed,
        )
    ticks = generate(params, args.duration)
    ticks.to_csv(args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    inputs = {"params": args.params} if args.params else {}
    _out_manifest(config, inputs, out_dir)
    print(f"generated {len(ticks)} ticks over {args.duration} ms -> {args.out}")
    return 0


def cmd_calibrate(args: argparse.Namespace, config: RunConfig) -> int:
    from .marketsim import TickSeries, calibrate

    params = calibrate(TickSeries.from_csv(args.ticks))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(params.to_json())
        fh.write("\n")
    _out_manifest(config, {"ticks": args.ticks}, os.path.dirname(os.path.abspath(args.out)) or ".")
    print(f"calibrated params -> {args.out}")
    return 0


def cmd_features(args: argparse.Namespace, config: RunConfig) -> int:
    from .features import FeatureConfig, compute_features
    from .messages import load_snapshot, replay_log

    f = config.features
    cfg = FeatureConfig(
        q_grid=f.q_grid,
        d_grid=f.d_grid,
        deltas_flow=f.deltas_flow,
        deltas_pret=f.deltas_pret,
        horizons=f.horizons,
        sample_interval_ms=f.sample_interval_ms,
    )
    snapshot = load_snapshot(args.snapshot)
    rows = compute_features(snapshot, replay_log(args.log), cfg)
    columns = cfg.column_names()
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_ms", *columns])
        for row in rows:
            writer.writerow(
                [row.timestamp_ms]
                + ["" if row.values.get(c) is None else repr(row.values[c]) for c in columns]
            )
    _out_manifest(
        config,
        {"log": args.log, "snapshot": args.snapshot},
        os.path.dirname(os.path.abspath(args.out)) or ".",
    )
    print(f"wrote {len(rows)} feature rows -> {args.out}")
    return 0


def cmd_predict_eval(args: argparse.Namespace, config: RunConfig) -> int:
    from .features import MidHistory, evaluate_predictor, forward_return
    from .marketsim import TickSeries

    ticks = TickSeries.from_csv(args.ticks)
    history = MidHistory()
    mids = ticks.mid
    for i in range(len(ticks)):
        history.push(int(ticks.timestamp_ms[i]), float(mids[i]))
    max_ts = int(ticks.timestamp_ms[-1]) if len(ticks) else 0

    with open(args.features, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        columns = header[1:]
        feat_rows = [
            (int(r[0]), [None if v == "" else float(v) for v in r[1:]]) for r in reader
        ]

    reports = []
    for horizon in config.features.horizons:
        for j, col in enumerate(columns):
            samples = []
            for ts, values in feat_rows:
                if ts + horizon > max_ts:
                    continue
                fret = forward_return(history, ts, horizon)
                if fret is None:
                    continue
                samples.append((values[j], fret))
            reports.append(evaluate_predictor(samples, feature=col, horizon_ms=horizon))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["feature", "horizon_ms", "alpha_hat", "beta_hat", "r_squared", "n_samples", "n_excluded"]
        )
        for rep in reports:
            writer.writerow(
                [
                    rep.feature,
                    rep.horizon_ms,
                    "" if rep.alpha_hat is None else repr(rep.alpha_hat),
                    "" if rep.beta_hat is None else repr(rep.beta_hat),
                    "" if rep.r_squared is None else repr(rep.r_squared),
                    rep.n_samples,
                    rep.n_excluded,
                ]
            )
    if args.plot:
        _plot_r2(reports, args.plot)
    _out_manifest(
        config,
        {"features": args.features, "ticks": args.ticks},
        os.path.dirname(os.path.abspath(args.out)) or ".",
    )
    print(f"wrote {len(reports)} regression rows -> {args.out}")
    return 0


def _plot_r2(reports, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "mmlab"
    import matplotlib.pyplot as plt

    by_feature: Dict[str, List] = {}
    for rep in reports:
        if rep.r_squared is not None:
            by_feature.setdefault(rep.feature, []).append((rep.horizon_ms, rep.r_squared))
    fig, ax = plt.subplots(figsize=(8, 5))
    for name, pts in sorted(by_feature.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("horizon (ms)")
    ax.set_ylabel("R^2")
    ax.set_title("Predictive power by horizon")
    ax.legend(fontsize=7, ncol=2)
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _load_policy(spec: str, config: RunConfig):
    from .agents import AdaptiveSpreadPolicy, FixedSpreadPolicy

    if spec == "fixed":
        return FixedSpreadPolicy()
    if spec == "adaptive":
        return AdaptiveSpreadPolicy(config.agent.adaptive_k)
    if spec.startswith("adaptive:"):
        return AdaptiveSpreadPolicy(float(spec.split(":", 1)[1]))
    from .rl.dqn import GreedyQPolicy
    from .rl.mlp import load_checkpoint
    from .rl.ppo import SoftmaxPolicy

    ckpt = load_checkpoint(spec)
    if ckpt["kind"] == "dqn":
        return GreedyQPolicy(ckpt["net"])
    return SoftmaxPolicy(ckpt["net"], deterministic=True)


def _make_alpha_tracker(config: RunConfig):
    if not config.agent.alpha_enabled:
        return None
    from .features import OnlineAlphaTracker

    return OnlineAlphaTracker(names=config.agent.alpha_features)


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    from .agents import observation_schema
    from .env import ExchangeEnv, LatencyConfig
    from .marketsim import TickSeries
    from .rl.mlp import save_checkpoint
    from .seeding import substream

    ticks = TickSeries.from_csv(args.ticks)
    e = config.env
    env = ExchangeEnv(
        ticks,
        LatencyConfig(e.l_submit, e.l_cancel),
        i_max=e.i_max,
        lam=e.lam,
        fill_mode=e.fill_mode,
        max_episode_ticks=e.max_episode_ticks,
        alpha_tracker=_make_alpha_tracker(config),
    )
    rl = config.rl
    algo = args.algo or rl.algo
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    rng = substream(config.seed, f"train-{algo}")
    if algo == "dqn":
        from .rl.dqn import DqnConfig, DqnTrainer

        trainer = DqnTrainer(
            env,
            DqnConfig(
                hidden=rl.hidden,
                gamma=rl.gamma,
                lr=rl.dqn_lr,
                batch_size=rl.batch_size,
                buffer_capacity=rl.buffer_capacity,
                target_sync_every=rl.target_sync_every,
                seed=config.seed,
            ),
            rng=rng,
        )
        result = trainer.train(args.steps or rl.total_steps)
        save_checkpoint(args.out, "dqn", result.net, trainer.opt)
        _write_dqn_log(result, os.path.join(out_dir, "training_log.csv"))
    elif algo == "ppo":
        from .rl.ppo import PpoConfig, PpoTrainer

        trainer = PpoTrainer(
            env,
            PpoConfig(
                hidden=rl.hidden,
                gamma=rl.gamma,
                lam=rl.gae_lambda,
                lr=rl.ppo_lr,
                clip_eps=rl.clip_eps,
                epochs=rl.epochs,
                rollout_steps=rl.rollout_steps,
                minibatch_size=rl.minibatch_size,
                ent_coef=rl.ent_coef,
                seed=config.seed,
            ),
            rng=rng,
        )
        result = trainer.train(args.updates or rl.total_updates)
        save_checkpoint(args.out, "ppo", result.net, trainer.opt)
        _write_ppo_log(result, os.path.join(out_dir, "training_log.csv"))
    else:
        raise MmlabError(f"unknown algo {algo!r}")
    schema = observation_schema(
        config.agent.alpha_features if config.agent.alpha_enabled else None
    )
    with open(os.path.join(out_dir, "obs_schema.json"), "w", encoding="utf-8") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")
    _out_manifest(config, {"ticks": args.ticks}, out_dir)
    print(f"trained {algo} -> {args.out}")
    return 0


def _write_dqn_log(result, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "steps", "reward", "td_error", "epsilon"])
        for row in result.episode_log:
            writer.writerow(
                [row.episode, row.steps, repr(row.reward), repr(row.td_error), repr(row.epsilon)]
            )


def _write_ppo_log(result, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "steps", "mean_episode_reward", "entropy", "clip_fraction"])
        for row in result.update_log:
            writer.writerow(
                [
                    row.update,
                    row.steps,
                    repr(row.mean_episode_reward),
                    repr(row.entropy),
                    repr(row.clip_fraction),
                ]
            )


def cmd_backtest(args: argparse.Namespace, config: RunConfig) -> int:
    from .backtest import report, run_backtest
    from .env import LatencyConfig
    from .marketsim import TickSeries

    ticks = TickSeries.from_csv(args.ticks)
    e = config.env
    latency = LatencyConfig(
        args.l_submit if args.l_submit is not None else e.l_submit,
        args.l_cancel if args.l_cancel is not None else e.l_cancel,
    )
    policy = _load_policy(args.policy, config)
    result = run_backtest(
        policy,
        ticks,
        latency,
        lam=e.lam,
        i_max=e.i_max,
        seed=config.seed,
        fill_mode=e.fill_mode,
        alpha_tracker=_make_alpha_tracker(config),
        max_episode_ticks=e.max_episode_ticks,
    )
    paths = report(result, args.out)
    inputs = {"ticks": args.ticks}
    if os.path.exists(args.policy):
        inputs["policy"] = args.policy
    _out_manifest(config, inputs, args.out)
    print(
        f"backtest: {len(result.episodes)} episodes, total reward "
        f"{result.total_reward:.4f}, {result.fills} fills; wrote {len(paths)} files"
    )
    return 0


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> int:
    from .backtest import latency_sweep, write_sweep_csv
    from .env import LatencyConfig
    from .marketsim import TickSeries

    ticks = TickSeries.from_csv(args.ticks)
    e = config.env
    policy = _load_policy(args.policy, config)
    values = [int(v) for v in args.values.split(",")]
    results, rho = latency_sweep(
        policy,
        ticks,
        args.axis,
        values,
        base_latency=LatencyConfig(e.l_submit, e.l_cancel),
        lam=e.lam,
        i_max=e.i_max,
        seed=config.seed,
        fill_mode=e.fill_mode,
        max_episode_ticks=e.max_episode_ticks,
    )
    os.makedirs(args.out, exist_ok=True)
    write_sweep_csv(results, rho, os.path.join(args.out, "sweep.csv"))
    inputs = {"ticks": args.ticks}
    if os.path.exists(args.policy):
        inputs["policy"] = args.policy
    _out_manifest(config, inputs, args.out)
    rho_text = "undefined" if rho is None else f"{rho:.3f}"
    print(f"sweep {args.axis} over {values}: spearman rho = {rho_text}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmlab",
        description="Latency-aware market-making laboratory",
    )
    parser.add_argument("--version", action="version", version=f"mmlab {__version__}")
    parser.add_argument("--config", help="JSON run config (sections: sim, env, agent, rl, features, backtest)")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("record", help="record a level-3 feed to a replayable log")
    p.add_argument("--feed", required=True)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, required=True, help="seconds")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("reconstruct", help="rebuild the book and emit top-of-book ticks")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--emit-ticks", required=True)
    p.add_argument("--price-decimals", type=int, default=2)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("simulate", help="generate a synthetic tick stream")
    p.add_argument("--params", help="SimParams JSON (defaults to the config's sim section)")
    p.add_argument("--duration", type=int, required=True, help="milliseconds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit simulator params from ticks")
    p.add_argument("--ticks", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("features", help="compute alpha features from a level-3 log")
    p.add_argument("--log", required=True)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("predict-eval", help="OLS predictive-power evaluation")
    p.add_argument("--features", required=True)
    p.add_argument("--ticks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="optional SVG of R^2 vs horizon")
    p.set_defaults(func=cmd_predict_eval)

    p = sub.add_parser("train", help="train a quoting agent")
    p.add_argument("--algo", choices=["dqn", "ppo"])
    p.add_argument("--ticks", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--steps", type=int, help="dqn env steps")
    p.add_argument("--updates", type=int, help="ppo updates")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="run a policy over a tick stream")
    p.add_argument("--policy", required=True, help="fixed | adaptive[:k] | checkpoint path")
    p.add_argument("--ticks", required=True)
    p.add_argument("--l-submit", type=int)
    p.add_argument("--l-cancel", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("sweep", help="latency sweep")
    p.add_argument("--policy", required=True)
    p.add_argument("--ticks", required=True)
    p.add_argument("--axis", choices=["submit", "cancel"], required=True)
    p.add_argument("--values", required=True, help="comma-separated ms values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.load(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.print_config:
            print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
            return 0
        if not getattr(args, "func", None):
            parser.print_help()
            return 2
        return args.func(args, config)
    except MmlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
