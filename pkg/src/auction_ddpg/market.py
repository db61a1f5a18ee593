"""Single-zone day-ahead settlement of stepwise offering curves against replayed prices.

Step ``i`` of a curve is paired with production mode ``i``: its accepted
volume is charged that mode's unit cost, and its size is capped by that
mode's capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import SETTLEMENT_LAG, WINDOW_HOURS, NormStats, OutOfRange, PriceSeries, window


class EpisodeFinished(RuntimeError):
    pass


class InvalidCurve(ValueError):
    pass


@dataclass(frozen=True)
class MarketConfig:
    costs: tuple[float, ...] = (10.0, 30.0, 60.0)
    capacities: tuple[float, ...] = (30.0, 200.0, 800.0)
    price_floor: float = 0.0
    price_cap: float = 3000.0

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        caps = tuple(float(d) for d in self.capacities)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "capacities", caps)
        if not costs or len(costs) != len(caps):
            raise ValueError("need one capacity per production mode and at least one mode")
        if not np.all(np.isfinite(costs)):
            raise ValueError("costs must be finite")
        if not all(d > 0 and np.isfinite(d) for d in caps):
            raise ValueError("capacities must be positive")
        if not self.price_floor < self.price_cap:
            raise ValueError("price_floor must be below price_cap")

    @property
    def n_steps(self) -> int:
        return len(self.costs)

    @property
    def action_dim(self) -> int:
        return 2 * self.n_steps


@dataclass(frozen=True)
class OfferingCurve:
    """``volumes[i]`` MWh offered at no less than ``prices[i]`` €/MWh."""

    volumes: tuple[float, ...]
    prices: tuple[float, ...]

    def validate(self, config: MarketConfig) -> None:
        if len(self.volumes) != config.n_steps or len(self.prices) != config.n_steps:
            raise InvalidCurve(f"curve must have {config.n_steps} steps")
        for i, (v, p) in enumerate(zip(self.volumes, self.prices)):
            if not 0.0 <= v <= config.capacities[i]:
                raise InvalidCurve(f"step {i}: volume {v} outside [0, {config.capacities[i]}]")
            if not config.price_floor <= p <= config.price_cap:
                raise InvalidCurve(f"step {i}: price {p} outside [{config.price_floor}, {config.price_cap}]")

    @classmethod
    def oracle(cls, pun_next: float, config: MarketConfig) -> OfferingCurve:
        """The curve that earns :func:`max_reward`: full capacity at the clearing price for modes in the money."""
        vols, prices = [], []
        for cost, cap in zip(config.costs, config.capacities):
            if pun_next > cost:
                vols.append(cap)
                prices.append(min(max(pun_next, config.price_floor), config.price_cap))
            else:
                vols.append(0.0)
                prices.append(config.price_cap)
        return cls(tuple(vols), tuple(prices))


@dataclass(frozen=True, eq=False)
class EnvState:
    window: np.ndarray
    t: int
    steps_left: int


@dataclass(frozen=True, eq=False)
class StepOutcome:
    reward: float
    normalized_reward: float
    next_state: EnvState
    done: bool
    pun_next: float


def settle(curve: OfferingCurve, pun_next: float, config: MarketConfig) -> float:
    curve.validate(config)
    reward = 0.0
    for v, p, c in zip(curve.volumes, curve.prices, config.costs):
        if p <= pun_next:
            reward += (p - c) * v
    return reward


def max_reward(pun_next: float, config: MarketConfig) -> float:
    return float(sum(max(pun_next - c, 0.0) * d for c, d in zip(config.costs, config.capacities)))


def normalize_reward(r: float, r_max: float) -> float:
    if r_max < 0:
        raise ValueError("r_max must be nonnegative")
    if r_max == 0:
        return 0.0
    return min(max(r, 0.0), r_max) / r_max


def settle_batch(volumes: np.ndarray, prices: np.ndarray, pun_next: np.ndarray, config: MarketConfig) -> np.ndarray:
    """Vectorized :func:`settle` over rows of ``(n, I)`` volume/price arrays."""
    costs = np.asarray(config.costs)
    accepted = prices <= np.asarray(pun_next)[:, None]
    return np.sum(np.where(accepted, (prices - costs) * volumes, 0.0), axis=1)


def max_reward_batch(pun_next: np.ndarray, config: MarketConfig) -> np.ndarray:
    costs = np.asarray(config.costs)
    caps = np.asarray(config.capacities)
    return np.sum(np.maximum(np.asarray(pun_next)[:, None] - costs, 0.0) * caps, axis=1)


def normalize_reward_batch(r: np.ndarray, r_max: np.ndarray) -> np.ndarray:
    safe = np.where(r_max > 0, r_max, 1.0)
    return np.where(r_max > 0, np.clip(r, 0.0, r_max) / safe, 0.0)


def episode_fits(series_len: int, start: int, episode_days: int, window_hours: int = WINDOW_HOURS) -> bool:
    return start >= window_hours and start + episode_days * 24 + SETTLEMENT_LAG <= series_len


def reset(
    series: PriceSeries,
    start: int,
    episode_days: int,
    stats: NormStats,
    window_hours: int = WINDOW_HOURS,
) -> EnvState:
    if episode_days < 1:
        raise ValueError("episode_days must be positive")
    if not episode_fits(len(series), start, episode_days, window_hours):
        raise OutOfRange(
            f"start {start} cannot host a {episode_days}-day episode in a {len(series)}h series"
        )
    return EnvState(window(series, start, stats, window_hours), int(start), episode_days * 24)


def step(
    state: EnvState,
    curve: OfferingCurve,
    series: PriceSeries,
    config: MarketConfig,
    stats: NormStats,
) -> StepOutcome:
    """Settle ``curve`` for hour ``t`` against the price one day later and advance one hour."""
    if state.steps_left <= 0:
        raise EpisodeFinished("episode already truncated; call reset")
    pun_next = float(series.prices[state.t + SETTLEMENT_LAG])
    reward = settle(curve, pun_next, config)
    norm = normalize_reward(reward, max_reward(pun_next, config))
    t = state.t + 1
    nxt = EnvState(window(series, t, stats, len(state.window)), t, state.steps_left - 1)
    return StepOutcome(reward, norm, nxt, nxt.steps_left == 0, pun_next)


def curve_from_arrays(volumes: Sequence[float], prices: Sequence[float]) -> OfferingCurve:
    return OfferingCurve(tuple(float(v) for v in volumes), tuple(float(p) for p in prices))
