"""Command-line entry point: ``train``, ``evaluate``, ``gradcheck`` and ``plot``.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 runtime failure
during training, 4 checkpoint/config mismatch, 5 gradient check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .config import ConfigError, RunConfig, dump_config, load_config
from .data import DataError, compute_norm_stats, load_pun_csv, stratified_split
from .ddpg import Agent, EpisodeMetrics, Trainer, evaluate, train
from .metrics import MetricsParseError, MetricsRow, MetricsWriter, read_metrics
from .neural import Gradients, grad_check, init_network
from .plotting import plot_metrics

log = logging.getLogger("auction_ddpg")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME, EXIT_CHECKPOINT, EXIT_GRADCHECK = range(6)
GRADCHECK_TOL = 1e-4

METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "checkpoint.json"
RESOLVED_CONFIG_FILE = "config.ini"


def _load_series(cfg: RunConfig):
    if cfg.data_path is None:
        raise ConfigError("data.path is not set")
    return load_pun_csv(cfg.data_path, cfg.columns)


def cmd_train(config_path: str | None, overrides: Sequence[str] = (), seed: int | None = None) -> int:
    overrides = list(overrides) + ([f"ddpg.seed={seed}"] if seed is not None else [])
    try:
        cfg = load_config(config_path, overrides)
        series = _load_series(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA

    out = cfg.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / RESOLVED_CONFIG_FILE).write_text(dump_config(cfg), encoding="utf-8")
    except OSError as exc:
        log.error("config error: output directory %s is not writable: %s", out, exc)
        return EXIT_CONFIG

    try:
        split = stratified_split(series, cfg.split, cfg.window_hours)
        stats = compute_norm_stats(series, split.train)
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA

    agent = Agent.create(cfg.hp, cfg.market, cfg.window_hours)
    trainer = Trainer(agent)
    ckpt_path = out / CHECKPOINT_FILE
    log.info(
        "training %d episodes x %d days on %d train starts (%d test), output in %s",
        cfg.hp.episodes, cfg.hp.episode_days, len(split.train), len(split.test), out,
    )
    with MetricsWriter(out / METRICS_FILE) as writer:
        clock = [time.perf_counter()]

        def on_episode(m: EpisodeMetrics, tr: Trainer) -> None:
            now = time.perf_counter()
            wall = now - clock[0] if cfg.wall_clock else 0.0
            clock[0] = now
            writer.append(MetricsRow(m.episode, m.mean_normalized_reward, m.mean_policy_loss, m.mean_critic_loss, wall))
            if cfg.checkpoint_every and m.episode % cfg.checkpoint_every == 0:
                checkpoint.save(ckpt_path, agent, stats, m.episode)
            if m.episode % 10 == 0 or m.episode == cfg.hp.episodes:
                log.info("episode %d: normalized reward %.4f", m.episode, m.mean_normalized_reward)

        try:
            train(agent, series, split.train, stats, on_episode, trainer)
        except DataError as exc:
            log.error("data error: %s", exc)
            return EXIT_DATA
        except Exception:
            log.exception("training failed after %d episodes; metrics so far are kept", trainer.episodes_done)
            return EXIT_RUNTIME
    checkpoint.save(ckpt_path, agent, stats, trainer.episodes_done)
    plot_metrics(read_metrics(out / METRICS_FILE), out)
    print(f"trained {trainer.episodes_done} episodes; metrics {out / METRICS_FILE}; checkpoint {ckpt_path}")
    return EXIT_OK


def _compatible(agent: Agent, cfg: RunConfig) -> str | None:
    if agent.config != cfg.market:
        return f"checkpoint market {agent.config} differs from config market {cfg.market}"
    if agent.state_dim != cfg.window_hours:
        return f"checkpoint window {agent.state_dim}h differs from config window {cfg.window_hours}h"
    hidden = agent.actor.dims[1:-1]
    if any(h != cfg.hp.hidden_size for h in hidden):
        return f"checkpoint hidden sizes {hidden} differ from config hidden_size {cfg.hp.hidden_size}"
    return None


def cmd_evaluate(checkpoint_path: str, config_path: str | None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        agent, stats, episode = checkpoint.load(checkpoint_path)
    except checkpoint.CheckpointError as exc:
        log.error("checkpoint error: %s", exc)
        return EXIT_CHECKPOINT
    problem = _compatible(agent, cfg)
    if problem:
        log.error("checkpoint/config mismatch: %s", problem)
        return EXIT_CHECKPOINT
    try:
        series = _load_series(cfg)
        split = stratified_split(series, cfg.split, cfg.window_hours)
        result = evaluate(agent, series, split.test, cfg.hp.episode_days, cfg.market, stats, cfg.window_hours)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "checkpoint": str(checkpoint_path),
        "checkpoint_episode": episode,
        "episode_days": cfg.hp.episode_days,
        "test_episodes": int(result.starts.size),
        "mean_normalized_reward": result.mean,
        "std_normalized_reward": result.std,
        "trace": "evaluation_trace.csv",
    }
    (out / "evaluation.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    n = cfg.market.n_steps
    with (out / "evaluation_trace.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["hour", "timestamp", "pun_next"]
            + [f"volume_{i + 1}" for i in range(n)]
            + [f"price_{i + 1}" for i in range(n)]
            + ["reward", "normalized_reward"]
        )
        for k, h in enumerate(result.hours):
            w.writerow(
                [int(h), series.timestamp(int(h)).strftime("%Y-%m-%d %H:00"), repr(float(result.pun_next[k]))]
                + [repr(float(v)) for v in result.volumes[k]]
                + [repr(float(p)) for p in result.prices[k]]
                + [repr(float(result.rewards[k])), repr(float(result.normalized[k]))]
            )
    print(
        f"evaluated {result.starts.size} test episodes: mean normalized reward "
        f"{result.mean:.6f} (std {result.std:.6f}); report {out / 'evaluation.json'}"
    )
    return EXIT_OK


def _double_one(grads: Gradients) -> None:
    w = grads.weights[-1]
    i = np.unravel_index(np.argmax(np.abs(w)), w.shape)
    w[i] *= 2.0


def gradcheck_errors(seed: int = 0, inject_fault: bool = False, hidden: int = 64, state_dim: int = 168, action_dim: int = 6) -> dict[str, float]:
    """Worst relative backprop error for the actor and critic architectures."""
    rng = np.random.default_rng(seed)
    actor = init_network([state_dim, hidden, hidden, action_dim], ["relu", "relu", "tanh"], rng)
    critic = init_network([state_dim + action_dim, hidden, hidden, 1], ["relu", "relu", "identity"], rng)
    corrupt = _double_one if inject_fault else None
    errors = {}
    for name, net in (("actor", actor), ("critic", critic)):
        x = rng.standard_normal(net.input_dim)
        g = rng.standard_normal(net.output_dim)
        errors[name] = grad_check(net, x, 1e-5, output_grad=g, corrupt=corrupt)
    return errors


def cmd_gradcheck(seed: int = 0, inject_fault: bool = False) -> int:
    errors = gradcheck_errors(seed, inject_fault)
    for name, err in errors.items():
        print(f"{name}: max relative error {err:.3e}")
    worst = max(errors.values())
    ok = worst < GRADCHECK_TOL
    print(f"worst: {worst:.3e} ({'PASS' if ok else 'FAIL'} at tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_plot(metrics_path: str, out_dir: str) -> int:
    try:
        rows = read_metrics(metrics_path)
    except MetricsParseError as exc:
        log.error("cannot parse metrics: %s", exc)
        return EXIT_DATA
    for p in plot_metrics(rows, out_dir):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auction-ddpg", description="DDPG bidding agent for day-ahead auctions")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent and write metrics, checkpoints and plots")
    p.add_argument("--config", required=True)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", help="greedy rollouts of a checkpoint over the test starts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of actor and critic backprop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("plot", help="render training curves from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "train":
        return cmd_train(args.config, args.overrides, args.seed)
    if args.command == "evaluate":
        return cmd_evaluate(args.checkpoint, args.config)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.seed, args.inject_fault)
    return cmd_plot(args.metrics, args.out)


if __name__ == "__main__":
    sys.exit(main())
