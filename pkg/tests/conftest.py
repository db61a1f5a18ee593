from datetime import datetime

import numpy as np
import pytest

from auction_ddpg.data import PriceSeries


def diurnal_prices(n_hours: int, seed: int = 7, noise: float = 3.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    h = np.arange(n_hours)
    return 50.0 + 20.0 * np.sin(2 * np.pi * h / 24) + rng.normal(0.0, noise, n_hours)


def write_csv(path, start: datetime, prices, decimal: str = ".", delimiter: str = ",") -> None:
    from datetime import timedelta

    lines = [delimiter.join(["Date", "Hour", "PUN"])]
    for k, p in enumerate(prices):
        ts = start + timedelta(hours=k)
        text = repr(float(p))
        if decimal == ",":
            text = text.replace(".", ",")
        lines.append(delimiter.join([ts.strftime("%Y%m%d"), str(ts.hour + 1), text]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def diurnal_series() -> PriceSeries:
    return PriceSeries(datetime(2019, 1, 1), diurnal_prices(24 * 40))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
