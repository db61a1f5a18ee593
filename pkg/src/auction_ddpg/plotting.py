"""Training-curve figures written as standalone SVG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

from matplotlib import rc_context  # noqa: E402
from matplotlib.backends.backend_svg import FigureCanvasSVG  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .metrics import MetricsRow  # noqa: E402

# fixed hash salt and no timestamp keep repeated renders byte-identical
STYLE = {
    "svg.hashsalt": "auction-ddpg",
    "svg.fonttype": "path",
    "path.simplify": False,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

PANELS = (
    ("reward.svg", "mean_normalized_reward", "Normalized reward (profit / max profit)", "Normalized reward", "tab:green"),
    ("policy_loss.svg", "mean_policy_loss", "Policy loss (-Q, scaled €)", "Policy loss", "tab:blue"),
    ("critic_loss.svg", "mean_critic_loss", "Critic loss (scaled €²)", "Critic loss", "tab:red"),
)


def _figure(episodes: Sequence[int], values: Sequence[float], ylabel: str, title: str, color: str) -> Figure:
    fig = Figure(figsize=(6.4, 3.6))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot()
    ax.plot(list(episodes), list(values), color=color, linewidth=1.0)
    ax.set_xlabel("Episode (count)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def plot_metrics(rows: Sequence[MetricsRow], out_dir: str | Path) -> list[Path]:
    """Render reward, policy-loss and critic-loss curves against episode index."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes = [r.episode for r in rows]
    paths = []
    with rc_context(STYLE):
        for fname, attr, ylabel, title, color in PANELS:
            fig = _figure(episodes, [getattr(r, attr) for r in rows], ylabel, title, color)
            path = out / fname
            fig.savefig(path, format="svg", metadata={"Date": None})
            paths.append(path)
    return paths
