"""Day-ahead auction bidding with a from-scratch DDPG agent."""

from .data import NormStats, PriceSeries, SplitSpec, load_pun_csv, stratified_split
from .ddpg import Agent, Hyperparameters, evaluate, train
from .market import MarketConfig, OfferingCurve

__all__ = [
    "Agent",
    "Hyperparameters",
    "MarketConfig",
    "NormStats",
    "OfferingCurve",
    "PriceSeries",
    "SplitSpec",
    "evaluate",
    "load_pun_csv",
    "stratified_split",
    "train",
]

__version__ = "0.1.0"
