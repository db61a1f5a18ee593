"""JSON checkpoints holding networks, Adam moments, normalization stats and run provenance.

Floats are written with Python's shortest round-trip repr, so a save/load
cycle is bit-exact.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import WINDOW_HOURS, NormStats
from .ddpg import Agent, Hyperparameters
from .market import MarketConfig
from .neural import Network, OptimizerState

FORMAT = "auction-ddpg-checkpoint"
VERSION = 1


class CheckpointError(Exception):
    pass


def _net_to_dict(net: Network) -> dict:
    return {
        "dims": net.dims,
        "activations": list(net.activations),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> Network:
    weights = [np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]]
    biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
    net = Network(weights, biases, list(d["activations"]))
    if net.dims != list(d["dims"]):
        raise CheckpointError(f"declared dims {d['dims']} disagree with stored arrays {net.dims}")
    if not all(np.all(np.isfinite(p)) for p in net.parameters()):
        raise CheckpointError("non-finite network parameter")
    return net


def _opt_to_dict(opt: OptimizerState) -> dict:
    return {
        "lr": opt.lr,
        "l2": opt.l2,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "eps": opt.eps,
        "step": opt.step,
        "m": [m.tolist() for m in opt.m],
        "v": [v.tolist() for v in opt.v],
    }


def _opt_from_dict(d: dict, net: Network) -> OptimizerState:
    shapes = [p.shape for p in net.parameters()]
    m = [np.array(a, dtype=np.float64).reshape(s) for a, s in zip(d["m"], shapes)]
    v = [np.array(a, dtype=np.float64).reshape(s) for a, s in zip(d["v"], shapes)]
    if len(m) != len(shapes) or len(v) != len(shapes):
        raise CheckpointError("optimizer moments do not match the network")
    return OptimizerState(
        lr=float(d["lr"]), l2=float(d["l2"]), beta1=float(d["beta1"]), beta2=float(d["beta2"]),
        eps=float(d["eps"]), step=int(d["step"]), m=m, v=v,
    )


def to_document(agent: Agent, stats: NormStats, episode: int = 0) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "episode": episode,
        "seed": agent.hp.seed,
        "window_hours": agent.state_dim,
        "hyperparameters": agent.hp.to_dict(),
        "market": asdict(agent.config),
        "norm_stats": {"mean": stats.mean, "std": stats.std},
        "networks": {name: _net_to_dict(net) for name, net in agent.networks().items()},
        "optimizers": {"actor": _opt_to_dict(agent.actor_opt), "critic": _opt_to_dict(agent.critic_opt)},
    }


def from_document(doc: dict) -> tuple[Agent, NormStats, int]:
    try:
        if doc.get("format") != FORMAT:
            raise CheckpointError(f"not a checkpoint (format={doc.get('format')!r})")
        if doc.get("version") != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
        hp = Hyperparameters(**doc["hyperparameters"])
        m = doc["market"]
        config = MarketConfig(tuple(m["costs"]), tuple(m["capacities"]), m["price_floor"], m["price_cap"])
        stats = NormStats(float(doc["norm_stats"]["mean"]), float(doc["norm_stats"]["std"]))
        nets = {name: _net_from_dict(doc["networks"][name]) for name in ("actor", "critic", "target_actor", "target_critic")}
        if nets["target_actor"].dims != nets["actor"].dims or nets["target_critic"].dims != nets["critic"].dims:
            raise CheckpointError("target networks differ in shape from their online networks")
        agent = Agent(
            nets["actor"],
            nets["critic"],
            hp,
            config,
            target_actor=nets["target_actor"],
            target_critic=nets["target_critic"],
            actor_opt=_opt_from_dict(doc["optimizers"]["actor"], nets["actor"]),
            critic_opt=_opt_from_dict(doc["optimizers"]["critic"], nets["critic"]),
        )
        if agent.state_dim != int(doc.get("window_hours", WINDOW_HOURS)):
            raise CheckpointError("actor input size disagrees with the recorded window length")
        return agent, stats, int(doc["episode"])
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc


def save(path: str | Path, agent: Agent, stats: NormStats, episode: int = 0) -> Path:
    """Write atomically: a crash mid-write leaves any previous file intact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_document(agent, stats, episode), allow_nan=False)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        os.chmod(tmp, 0o644)  # mkstemp creates owner-only files
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def load(path: str | Path) -> tuple[Agent, NormStats, int]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path} does not hold a checkpoint object")
    return from_document(doc)
