"""DDPG bidding agent: actor/critic with target copies, replay, OU exploration, training and evaluation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, NamedTuple, Protocol

import numpy as np

from . import market
from .data import WINDOW_HOURS, InsufficientData, NormStats, PriceSeries, windows
from .market import MarketConfig, OfferingCurve
from .neural import (
    Network,
    OptimizerState,
    ShapeMismatch,
    backward,
    forward,
    init_network,
    optimizer_step,
    soft_update,
)

log = logging.getLogger(__name__)


@dataclass
class Hyperparameters:
    episodes: int = 1000
    episode_days: int = 30
    batch_size: int = 64
    hidden_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-5
    gamma: float = 0.99
    tau: float = 0.01
    buffer_capacity: int = 50000
    ou_theta: float = 0.15
    ou_mu: float = 1.0
    ou_sigma: float = 2.0
    ou_dt: float = 1.0
    warmup_transitions: int = 1000
    l2: float = 1e-4
    reward_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        for name in ("episode_days", "batch_size", "hidden_size", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.warmup_transitions < 0:
            raise ValueError("warmup_transitions must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0 or self.l2 < 0:
            raise ValueError("learning rates must be positive and l2 nonnegative")
        if not self.reward_scale > 0:
            raise ValueError("reward_scale must be positive")
        if self.ou_theta <= 0 or self.ou_sigma < 0 or self.ou_dt <= 0:
            raise ValueError("OU noise needs theta > 0, sigma >= 0, dt > 0")

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in fields(cls)}

    def to_dict(self) -> dict:
        return asdict(self)


class OUNoise:
    """Euler-Maruyama discretization of a mean-reverting Ornstein-Uhlenbeck process."""

    def __init__(self, dim: int, theta: float = 0.15, mu: float = 1.0, sigma: float = 2.0, dt: float = 1.0):
        if theta <= 0 or sigma < 0 or dt <= 0:
            raise ValueError("OU noise needs theta > 0, sigma >= 0, dt > 0")
        self.theta, self.mu, self.sigma, self.dt = theta, mu, sigma, dt
        self.x = np.full(dim, float(mu))

    def reset(self) -> None:
        self.x = np.full_like(self.x, self.mu)

    def step(self, rng: np.random.Generator | None = None, xi: np.ndarray | None = None) -> np.ndarray:
        if xi is None:
            xi = rng.standard_normal(self.x.shape)
        self.x = self.x - self.theta * (self.x - self.mu) * self.dt + self.sigma * np.sqrt(self.dt) * xi
        return self.x


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    truncated: bool = False


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    truncated: np.ndarray


class NotEnoughSamples(RuntimeError):
    pass


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions, sampled uniformly with replacement."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.truncated = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def push(self, tr: Transition) -> None:
        i = self.cursor
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.truncated[i] = tr.truncated
        self.cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.count < batch_size:
            raise NotEnoughSamples(f"buffer holds {self.count} transitions, batch needs {batch_size}")
        return rng.integers(0, self.count, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.truncated[idx])

    def oldest(self) -> int:
        """Ring slot holding the oldest stored transition."""
        return self.cursor if self.count == self.capacity else 0


def decode_actions(u: np.ndarray, config: MarketConfig) -> tuple[np.ndarray, np.ndarray]:
    """Map normalized actions in [-1, 1] (interleaved volume, price per step) to volumes and prices."""
    u = np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0)
    caps = np.asarray(config.capacities)
    vols = (u[..., 0::2] + 1.0) / 2.0 * caps
    prices = config.price_floor + (u[..., 1::2] + 1.0) / 2.0 * (config.price_cap - config.price_floor)
    # rounding can overshoot the bounds by an ulp
    return np.minimum(vols, caps), np.clip(prices, config.price_floor, config.price_cap)


def encode_curve(curve: OfferingCurve, config: MarketConfig) -> np.ndarray:
    """Inverse of :func:`decode_actions` for a single curve."""
    caps = np.asarray(config.capacities)
    u = np.empty(config.action_dim)
    u[0::2] = 2.0 * np.asarray(curve.volumes) / caps - 1.0
    u[1::2] = 2.0 * (np.asarray(curve.prices) - config.price_floor) / (config.price_cap - config.price_floor) - 1.0
    return u


class Policy(Protocol):
    def act_batch(self, states: np.ndarray) -> np.ndarray: ...


class Agent:
    def __init__(
        self,
        actor: Network,
        critic: Network,
        hp: Hyperparameters,
        config: MarketConfig,
        target_actor: Network | None = None,
        target_critic: Network | None = None,
        actor_opt: OptimizerState | None = None,
        critic_opt: OptimizerState | None = None,
    ):
        state_dim = actor.input_dim
        if actor.output_dim != config.action_dim or critic.input_dim != state_dim + config.action_dim or critic.output_dim != 1:
            raise ShapeMismatch("actor/critic dimensions disagree with the market configuration")
        self.actor, self.critic = actor, critic
        self.target_actor = target_actor if target_actor is not None else actor.copy()
        self.target_critic = target_critic if target_critic is not None else critic.copy()
        self.actor_opt = actor_opt or OptimizerState.for_network(actor, hp.actor_lr, hp.l2)
        self.critic_opt = critic_opt or OptimizerState.for_network(critic, hp.critic_lr, hp.l2)
        self.hp = hp
        self.config = config

    @classmethod
    def create(cls, hp: Hyperparameters, config: MarketConfig, state_dim: int = WINDOW_HOURS) -> Agent:
        ss = np.random.SeedSequence(hp.seed)
        actor_seed, critic_seed = ss.spawn(2)
        h = hp.hidden_size
        actor = init_network([state_dim, h, h, config.action_dim], ["relu", "relu", "tanh"], np.random.default_rng(actor_seed))
        critic = init_network(
            [state_dim + config.action_dim, h, h, 1], ["relu", "relu", "identity"], np.random.default_rng(critic_seed)
        )
        return cls(actor, critic, hp, config)

    @property
    def state_dim(self) -> int:
        return self.actor.input_dim

    def networks(self) -> dict[str, Network]:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "target_actor": self.target_actor,
            "target_critic": self.target_critic,
        }

    def checksum(self) -> float:
        parts = [net.flat() for net in self.networks().values()]
        for opt in (self.actor_opt, self.critic_opt):
            parts += [m.ravel() for m in opt.m] + [v.ravel() for v in opt.v] + [np.array([opt.step])]
        return float(np.sum(np.abs(np.concatenate(parts)) * np.arange(1, sum(p.size for p in parts) + 1)))

    def act_batch(self, states: np.ndarray) -> np.ndarray:
        return np.clip(forward(self.actor, states)[0], -1.0, 1.0)

    def select_action(self, state: np.ndarray, noise: np.ndarray | OUNoise | None = None) -> tuple[np.ndarray, OfferingCurve]:
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.state_dim,):
            raise ShapeMismatch(f"state must have {self.state_dim} entries, got {state.shape}")
        u = forward(self.actor, state)[0]
        if noise is not None:
            u = u + (noise.x if isinstance(noise, OUNoise) else noise)
        u = np.clip(u, -1.0, 1.0)
        vols, prices = decode_actions(u, self.config)
        return u, market.curve_from_arrays(vols, prices)

    def q_values(self, states: np.ndarray, actions: np.ndarray, target: bool = False) -> np.ndarray:
        net = self.target_critic if target else self.critic
        return forward(net, np.hstack([states, actions]))[0][:, 0]

    def critic_targets(self, batch: Batch) -> np.ndarray:
        # time-limit truncation still bootstraps, so no done mask
        next_actions = forward(self.target_actor, batch.next_states)[0]
        return self.hp.reward_scale * batch.rewards + self.hp.gamma * self.q_values(batch.next_states, next_actions, target=True)

    def critic_update(self, batch: Batch) -> float:
        m = len(batch.rewards)
        if m == 0:
            raise ValueError("empty batch")
        y = self.critic_targets(batch)
        q, tape = forward(self.critic, np.hstack([batch.states, batch.actions]))
        err = q[:, 0] - y
        loss = float(np.mean(err**2))
        grads = backward(self.critic, tape, (2.0 / m) * err[:, None])
        optimizer_step(self.critic, grads, self.critic_opt)
        return loss

    def q_and_action_grad(self, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Critic values and dQ/da per row; the critic's own parameter gradients are discarded."""
        q, tape = forward(self.critic, np.hstack([states, actions]))
        dq = backward(self.critic, tape, np.ones_like(q)).input
        return q[:, 0], dq[:, self.state_dim :]

    def actor_update(self, batch: Batch) -> float:
        return policy_step(self.actor, self.actor_opt, batch.states, self.q_and_action_grad)

    def soft_update_targets(self) -> None:
        soft_update(self.target_actor, self.actor, self.hp.tau)
        soft_update(self.target_critic, self.critic, self.hp.tau)


def policy_step(
    actor: Network,
    opt: OptimizerState,
    states: np.ndarray,
    critic: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
) -> float:
    """One actor step on ``-mean Q(s, mu(s))``; returns the loss before the step.

    ``critic`` maps (states, actions) to (Q values, dQ/da), so the gradient
    reaching the actor is the sampled deterministic policy gradient.
    """
    m = len(states)
    if m == 0:
        raise ValueError("empty batch")
    mu, tape = forward(actor, states)
    q, dq_da = critic(states, mu)
    grads = backward(actor, tape, -dq_da / m)
    optimizer_step(actor, grads, opt)
    return -float(np.mean(q))


@dataclass
class EpisodeMetrics:
    episode: int
    mean_normalized_reward: float
    mean_policy_loss: float
    mean_critic_loss: float
    mean_reward: float
    start: int
    updates: int


def valid_starts(starts: Iterable[int], series_len: int, episode_days: int, window_hours: int = WINDOW_HOURS) -> np.ndarray:
    arr = np.asarray(sorted(int(s) for s in starts), dtype=np.int64)
    keep = [market.episode_fits(series_len, int(s), episode_days, window_hours) for s in arr]
    return arr[np.asarray(keep, dtype=bool)] if arr.size else arr


@dataclass
class Trainer:
    """Owns the replay buffer, exploration noise and RNG that persist across episodes."""

    agent: Agent
    rng: np.random.Generator = None  # type: ignore[assignment]
    buffer: ReplayBuffer = None  # type: ignore[assignment]
    noise: OUNoise = None  # type: ignore[assignment]
    episodes_done: int = 0
    updates: int = 0
    warmup: int = field(init=False)

    def __post_init__(self):
        hp = self.agent.hp
        if self.rng is None:
            self.rng = np.random.default_rng(np.random.SeedSequence(hp.seed).spawn(3)[2])
        if self.buffer is None:
            self.buffer = ReplayBuffer(hp.buffer_capacity, self.agent.state_dim, self.agent.config.action_dim)
        if self.noise is None:
            self.noise = OUNoise(self.agent.config.action_dim, hp.ou_theta, hp.ou_mu, hp.ou_sigma, hp.ou_dt)
        self.warmup = max(hp.batch_size, hp.warmup_transitions)

    def run_episode(self, series: PriceSeries, starts: np.ndarray, stats: NormStats) -> EpisodeMetrics:
        agent, hp = self.agent, self.agent.hp
        start = int(starts[self.rng.integers(0, len(starts))])
        state = market.reset(series, start, hp.episode_days, stats, agent.state_dim)
        self.noise.reset()
        norm, raw, plosses, closses = [], [], [], []
        done = False
        while not done:
            u, curve = agent.select_action(state.window, self.noise)
            out = market.step(state, curve, series, agent.config, stats)
            self.buffer.push(Transition(state.window, u, out.reward, out.next_state.window, out.done))
            self.noise.step(self.rng)
            if len(self.buffer) >= self.warmup:
                batch = self.buffer.sample(hp.batch_size, self.rng)
                closses.append(agent.critic_update(batch))
                plosses.append(agent.actor_update(batch))
                agent.soft_update_targets()
                self.updates += 1
            norm.append(out.normalized_reward)
            raw.append(out.reward)
            state, done = out.next_state, out.done
        self.episodes_done += 1
        return EpisodeMetrics(
            episode=self.episodes_done,
            mean_normalized_reward=float(np.mean(norm)),
            mean_policy_loss=float(np.mean(plosses)) if plosses else float("nan"),
            mean_critic_loss=float(np.mean(closses)) if closses else float("nan"),
            mean_reward=float(np.mean(raw)),
            start=start,
            updates=len(closses),
        )


def train(
    agent: Agent,
    series: PriceSeries,
    train_starts: Iterable[int],
    stats: NormStats,
    callback: Callable[[EpisodeMetrics, Trainer], None] | None = None,
    trainer: Trainer | None = None,
) -> list[EpisodeMetrics]:
    """Run ``agent.hp.episodes`` episodes from uniformly drawn training starts.

    Each step explores with OU noise, stores the transition and, once the
    buffer holds ``max(batch_size, warmup_transitions)`` entries, performs one
    critic update, one actor update and a soft target update.
    """
    hp = agent.hp
    if hp.episodes == 0:
        return []
    starts = valid_starts(train_starts, len(series), hp.episode_days, agent.state_dim)
    if starts.size == 0:
        raise InsufficientData(f"no training start can host a {hp.episode_days}-day episode")
    trainer = trainer or Trainer(agent)
    history = []
    for _ in range(hp.episodes):
        metrics = trainer.run_episode(series, starts, stats)
        history.append(metrics)
        if callback is not None:
            callback(metrics, trainer)
    return history


@dataclass
class EvaluationResult:
    mean: float
    std: float
    episode_means: np.ndarray
    starts: np.ndarray
    hours: np.ndarray
    pun_next: np.ndarray
    rewards: np.ndarray
    normalized: np.ndarray
    volumes: np.ndarray
    prices: np.ndarray


def evaluate(
    policy: Policy,
    series: PriceSeries,
    test_starts: Iterable[int],
    episode_days: int,
    config: MarketConfig,
    stats: NormStats,
    window_hours: int = WINDOW_HOURS,
    chunk: int = 4096,
) -> EvaluationResult:
    """Greedy rollouts from every test start.

    Prices are exogenous, so the state at hour ``t`` does not depend on the
    start or on earlier actions: each distinct hour is settled once and the
    per-episode means are averaged from that shared per-hour trace.
    """
    starts = valid_starts(test_starts, len(series), episode_days, window_hours)
    if starts.size == 0:
        raise InsufficientData(f"no test start can host a {episode_days}-day episode")
    steps = episode_days * 24
    covered = np.zeros(len(series), dtype=bool)
    for s in starts:
        covered[s : s + steps] = True
    hours = np.flatnonzero(covered)
    actions = np.vstack(
        [policy.act_batch(windows(series, hours[i : i + chunk], stats, window_hours)) for i in range(0, hours.size, chunk)]
    )
    vols, prices = decode_actions(actions, config)
    pun = series.prices[hours + 24]
    rewards = market.settle_batch(vols, prices, pun, config)
    normalized = market.normalize_reward_batch(rewards, market.max_reward_batch(pun, config))
    by_hour = np.zeros(len(series))
    by_hour[hours] = normalized
    episode_means = np.array([by_hour[s : s + steps].mean() for s in starts])
    return EvaluationResult(
        mean=float(episode_means.mean()),
        std=float(episode_means.std()),
        episode_means=episode_means,
        starts=starts,
        hours=hours,
        pun_next=pun,
        rewards=rewards,
        normalized=normalized,
        volumes=vols,
        prices=prices,
    )
