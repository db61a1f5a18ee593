"""Write a synthetic hourly price CSV with a daily cycle plus Gaussian noise."""

import argparse
from datetime import datetime

import numpy as np

from auction_ddpg.data import PriceSeries, write_pun_csv


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise", type=float, default=3.0, help="noise std in EUR/MWh")
    args = p.parse_args()
    h = np.arange(24 * args.days)
    rng = np.random.default_rng(args.seed)
    prices = 50.0 + 20.0 * np.sin(2 * np.pi * h / 24) + rng.normal(0.0, args.noise, h.size)
    write_pun_csv(PriceSeries(datetime(2019, 1, 1), prices), args.out)


if __name__ == "__main__":
    main()
