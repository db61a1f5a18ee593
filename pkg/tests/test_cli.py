import json
import re
import subprocess
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

from auction_ddpg import checkpoint, cli
from auction_ddpg.data import NormStats
from auction_ddpg.ddpg import Agent, Hyperparameters, Trainer
from auction_ddpg.market import MarketConfig
from auction_ddpg.metrics import HEADER, MetricsRow, MetricsWriter, read_metrics

from conftest import diurnal_prices, write_csv

TINY = """\
[data]
path = prices.csv
[market]
price_cap = 100
[ddpg]
episodes = 4
episode_days = 1
batch_size = 8
hidden_size = 8
warmup_transitions = 30
buffer_capacity = 500
ou_mu = 0
ou_sigma = 0.15
seed = 3
[run]
out_dir = out
checkpoint_every = 2
wall_clock = false
"""


@pytest.fixture
def run_dir(tmp_path):
    write_csv(tmp_path / "prices.csv", datetime(2019, 1, 1), diurnal_prices(24 * 30))
    (tmp_path / "run.ini").write_text(TINY)
    return tmp_path


def train(run_dir, *overrides, seed=None):
    return cli.cmd_train(str(run_dir / "run.ini"), list(overrides), seed)


def test_train_writes_metrics_checkpoint_and_plots(run_dir):
    assert train(run_dir) == cli.EXIT_OK
    out = run_dir / "out"
    rows = read_metrics(out / "metrics.csv")
    assert [r.episode for r in rows] == [1, 2, 3, 4]
    assert all(r.wall_seconds == 0.0 for r in rows)
    assert all(0.0 <= r.mean_normalized_reward <= 1.0 for r in rows)
    _, _, episode = checkpoint.load(out / "checkpoint.json")
    assert episode == 4
    assert {p.name for p in out.glob("*.svg")} == {"reward.svg", "policy_loss.svg", "critic_loss.svg"}
    assert (out / "config.ini").is_file()


def test_zero_episodes_gives_header_only(run_dir):
    assert train(run_dir, "episodes=0") == cli.EXIT_OK
    text = (run_dir / "out" / "metrics.csv").read_text()
    assert text == ",".join(HEADER) + "\n"


def test_training_is_bitwise_reproducible(run_dir):
    assert train(run_dir, "run.out_dir=" + str(run_dir / "a")) == 0
    assert train(run_dir, "run.out_dir=" + str(run_dir / "b")) == 0
    for name in ("metrics.csv", "checkpoint.json", "reward.svg"):
        assert (run_dir / "a" / name).read_bytes() == (run_dir / "b" / name).read_bytes()


def test_seed_flag_changes_the_run(run_dir):
    assert train(run_dir, "run.out_dir=" + str(run_dir / "a")) == 0
    assert train(run_dir, "run.out_dir=" + str(run_dir / "b"), seed=4) == 0
    assert (run_dir / "a" / "metrics.csv").read_bytes() != (run_dir / "b" / "metrics.csv").read_bytes()


def test_env_var_sets_output_dir(run_dir, monkeypatch):
    monkeypatch.setenv("AUCTION_DDPG_OUT", str(run_dir / "env_out"))
    assert train(run_dir, "episodes=1") == 0
    assert (run_dir / "env_out" / "metrics.csv").is_file()


def test_crash_keeps_partial_metrics_and_cadence_checkpoint(run_dir, monkeypatch):
    original = Trainer.run_episode

    def flaky(self, *args, **kw):
        if self.episodes_done == 3:
            raise FloatingPointError("simulated failure")
        return original(self, *args, **kw)

    monkeypatch.setattr(Trainer, "run_episode", flaky)
    assert train(run_dir) == cli.EXIT_RUNTIME
    rows = read_metrics(run_dir / "out" / "metrics.csv")
    assert [r.episode for r in rows] == [1, 2, 3]
    _, _, episode = checkpoint.load(run_dir / "out" / "checkpoint.json")
    assert episode == 2


def test_killed_process_leaves_whole_rows(run_dir):
    # a long run killed from outside must leave a parseable metrics file
    script = (
        "import sys; from auction_ddpg.cli import main; "
        f"sys.exit(main(['train', '--config', {str(run_dir / 'run.ini')!r}, '--set', 'episodes=100000']))"
    )
    proc = subprocess.Popen([sys.executable, "-c", script], stderr=subprocess.DEVNULL, stdout=subprocess.DEVNULL)
    metrics = run_dir / "out" / "metrics.csv"
    try:
        for _ in range(600):
            if metrics.is_file() and len(metrics.read_text().splitlines()) >= 4:
                break
            proc.wait(timeout=0.05) if proc.poll() is not None else None
            import time

            time.sleep(0.05)
    finally:
        proc.kill()
        proc.wait()
    rows = read_metrics(metrics)
    assert len(rows) >= 3
    assert [r.episode for r in rows] == list(range(1, len(rows) + 1))


@pytest.mark.parametrize(
    "override, code",
    [("ddpg.gamma=7", cli.EXIT_CONFIG), ("no.such=1", cli.EXIT_CONFIG), ("data.path=missing.csv", cli.EXIT_DATA)],
)
def test_train_error_exits(run_dir, override, code):
    assert train(run_dir, override) == code


def test_train_missing_config(tmp_path):
    assert cli.cmd_train(str(tmp_path / "nope.ini")) == cli.EXIT_CONFIG


def test_train_too_short_series(tmp_path):
    write_csv(tmp_path / "prices.csv", datetime(2019, 1, 1), diurnal_prices(24 * 8))
    (tmp_path / "run.ini").write_text(TINY)
    assert cli.cmd_train(str(tmp_path / "run.ini")) == cli.EXIT_DATA


def test_malformed_csv_is_a_data_error(run_dir):
    (run_dir / "prices.csv").write_text("Date,Hour,PUN\n20190101,1,abc\n")
    assert train(run_dir) == cli.EXIT_DATA


def oracle_checkpoint(path: Path, pun: float) -> Path:
    """Actor with zero weights whose biases bid every profitable mode in full just under ``pun``."""
    config = MarketConfig(price_cap=3000.0)
    agent = Agent.create(Hyperparameters(hidden_size=8), config)
    last = len(agent.actor.weights) - 1
    for w in agent.actor.weights:
        w[...] = 0.0
    bid = np.arctanh(2.0 * (pun - 1e-7) / config.price_cap - 1.0)
    agent.actor.biases[last][...] = [20.0, bid, 20.0, bid, 20.0, 20.0]
    return checkpoint.save(path, agent, NormStats(pun, 1.0))


def evaluate_setup(tmp_path, pun=50.0, extra=""):
    write_csv(tmp_path / "flat.csv", datetime(2019, 1, 1), np.full(24 * 40, pun))
    (tmp_path / "eval.ini").write_text(
        f"[data]\npath = flat.csv\n[ddpg]\nhidden_size = 8\nepisode_days = 2\n[run]\nout_dir = ev\n{extra}"
    )
    return tmp_path / "eval.ini"


def test_evaluate_oracle_policy_scores_one(tmp_path):
    ini = evaluate_setup(tmp_path)
    ck = oracle_checkpoint(tmp_path / "oracle.json", 50.0)
    assert cli.cmd_evaluate(str(ck), str(ini)) == cli.EXIT_OK
    report = json.loads((tmp_path / "ev" / "evaluation.json").read_text())
    assert report["mean_normalized_reward"] == pytest.approx(1.0, abs=1e-6)
    assert report["test_episodes"] > 0
    trace = (tmp_path / "ev" / "evaluation_trace.csv").read_text().splitlines()
    assert trace[0].startswith("hour,timestamp,pun_next,volume_1")
    assert len(trace) > 1


def test_evaluate_corrupted_checkpoint(tmp_path):
    ini = evaluate_setup(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "auction-ddpg-checkpoint", "version": 1, "networks": ')
    assert cli.cmd_evaluate(str(bad), str(ini)) == cli.EXIT_CHECKPOINT
    assert cli.cmd_evaluate(str(tmp_path / "absent.json"), str(ini)) == cli.EXIT_CHECKPOINT


@pytest.mark.parametrize(
    "extra",
    ["[market]\nprice_cap = 100\n", "[data]\n", "hidden_size = 16\n"],
    ids=["market", "noop", "hidden"],
)
def test_evaluate_mismatched_config(tmp_path, extra):
    ck = oracle_checkpoint(tmp_path / "oracle.json", 50.0)
    if extra == "[data]\n":
        # window length change lives in the data section
        text = "[data]\npath = flat.csv\nwindow_hours = 48\n[ddpg]\nhidden_size = 8\nepisode_days = 2\n"
        write_csv(tmp_path / "flat.csv", datetime(2019, 1, 1), np.full(24 * 40, 50.0))
        (tmp_path / "eval.ini").write_text(text)
        ini = tmp_path / "eval.ini"
    elif extra.startswith("hidden"):
        write_csv(tmp_path / "flat.csv", datetime(2019, 1, 1), np.full(24 * 40, 50.0))
        (tmp_path / "eval.ini").write_text("[data]\npath = flat.csv\n[ddpg]\nhidden_size = 16\n")
        ini = tmp_path / "eval.ini"
    else:
        ini = evaluate_setup(tmp_path, extra=extra)
    assert cli.cmd_evaluate(str(ck), str(ini)) == cli.EXIT_CHECKPOINT


def test_gradcheck_passes_and_repeats(capsys):
    assert cli.cmd_gradcheck(0) == cli.EXIT_OK
    first = capsys.readouterr().out
    assert cli.cmd_gradcheck(0) == cli.EXIT_OK
    assert capsys.readouterr().out == first
    assert "PASS" in first


def test_gradcheck_detects_injected_fault(capsys):
    assert cli.cmd_gradcheck(0, inject_fault=True) == cli.EXIT_GRADCHECK
    assert "FAIL" in capsys.readouterr().out


def test_main_dispatches_gradcheck():
    assert cli.main(["gradcheck", "--seed", "1"]) == cli.EXIT_OK


def polyline_points(svg: str) -> int:
    """Vertex count of the longest path in an SVG file."""
    best = 0
    for d in re.findall(r'<path d="([^"]*)"', svg):
        best = max(best, len(re.findall(r"[ML]", d)))
    return best


def test_plot_thousand_rows(tmp_path):
    metrics = tmp_path / "metrics.csv"
    rng = np.random.default_rng(0)
    with MetricsWriter(metrics) as w:
        for e in range(1, 1001):
            w.append(MetricsRow(e, float(rng.random()), float(-rng.random()), float(rng.random() * 10), 0.0))
    assert cli.cmd_plot(str(metrics), str(tmp_path / "a")) == cli.EXIT_OK
    assert cli.cmd_plot(str(metrics), str(tmp_path / "b")) == cli.EXIT_OK
    for name in ("reward.svg", "policy_loss.svg", "critic_loss.svg"):
        svg = (tmp_path / "a" / name).read_text()
        assert polyline_points(svg) == 1000
        assert (tmp_path / "b" / name).read_bytes() == (tmp_path / "a" / name).read_bytes()


def test_plot_empty_metrics(tmp_path):
    metrics = tmp_path / "metrics.csv"
    MetricsWriter(metrics).close()
    assert cli.cmd_plot(str(metrics), str(tmp_path / "out")) == cli.EXIT_OK
    assert len(list((tmp_path / "out").glob("*.svg"))) == 3


@pytest.mark.parametrize("text", ["", "a,b\n", ",".join(HEADER) + "\n1,x,0,0,0\n", ",".join(HEADER) + "\n2,0,0,0,0\n1,0,0,0,0\n"])
def test_plot_bad_metrics(tmp_path, text):
    metrics = tmp_path / "metrics.csv"
    metrics.write_text(text)
    assert cli.cmd_plot(str(metrics), str(tmp_path / "out")) == cli.EXIT_DATA


def test_plot_missing_file(tmp_path):
    assert cli.cmd_plot(str(tmp_path / "none.csv"), str(tmp_path / "out")) == cli.EXIT_DATA


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "auction_ddpg", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "evaluate", "gradcheck", "plot"):
        assert cmd in res.stdout
