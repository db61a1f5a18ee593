"""Run configuration: INI sections mirroring the data, split, market, ddpg and run settings.

Precedence per key: ``--set`` override, then ``AUCTION_DDPG_OUT`` (output
directory only), then the config file, then the built-in default. Relative
paths given in the file are taken relative to the file itself.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

from .data import WINDOW_HOURS, ColumnSpec, SplitSpec
from .ddpg import Hyperparameters
from .market import MarketConfig

OUT_ENV = "AUCTION_DDPG_OUT"


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    data_path: Path | None = None
    columns: ColumnSpec = field(default_factory=ColumnSpec)
    window_hours: int = WINDOW_HOURS
    split: SplitSpec = field(default_factory=SplitSpec)
    market: MarketConfig = field(default_factory=MarketConfig)
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    out_dir: Path = Path("runs/default")
    checkpoint_every: int = 50
    wall_clock: bool = True


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


# section -> key -> parser
SCHEMA: dict[str, dict[str, object]] = {
    "data": {"path": str, "date_column": str, "hour_column": str, "price_column": str, "window_hours": _int},
    "split": {"train_fraction": float, "seed": _int},
    "market": {"costs": _floats, "capacities": _floats, "price_floor": float, "price_cap": float},
    "ddpg": {name: (_int if typ is int else float) for name, typ in Hyperparameters.field_types().items()},
    "run": {"out_dir": str, "checkpoint_every": _int, "wall_clock": _bool},
}


def parse_overrides(items: Iterable[str]) -> dict[tuple[str, str], str]:
    """Turn ``section.key=value`` (or an unambiguous bare ``key=value``) into a lookup."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, name = key.split(".", 1)
        else:
            owners = [s for s, keys in SCHEMA.items() if key in keys]
            if len(owners) != 1:
                raise ConfigError(f"override key {key!r} is {'ambiguous' if owners else 'unknown'}; use section.key")
            section, name = owners[0], key
        if name not in SCHEMA.get(section, {}):
            raise ConfigError(f"unknown setting {section}.{name}")
        out[(section, name)] = value.strip()
    return out


def load_config(
    path: str | Path | None,
    overrides: Iterable[str] = (),
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    env = os.environ if env is None else env
    raw: dict[tuple[str, str], str] = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for name, value in parser.items(section):
                if name not in SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown setting {section}.{name}")
                raw[(section, name)] = value
        base = path.parent
    # relative paths written in the file resolve against the file's directory
    out_from_file = ("run", "out_dir") in raw
    if env.get(OUT_ENV):
        raw[("run", "out_dir")] = env[OUT_ENV]
    cli = parse_overrides(overrides)
    if env.get(OUT_ENV) or ("run", "out_dir") in cli:
        out_from_file = False
    raw.update(cli)

    values: dict[tuple[str, str], object] = {}
    for (section, name), text in raw.items():
        try:
            values[(section, name)] = SCHEMA[section][name](text)  # type: ignore[operator]
        except ValueError as exc:
            raise ConfigError(f"{section}.{name}: {exc}") from exc

    def pick(section: str) -> dict:
        return {name: v for (s, name), v in values.items() if s == section}

    data, run = pick("data"), pick("run")
    try:
        cfg = RunConfig(
            data_path=_resolve(base, data["path"]) if "path" in data else None,
            columns=ColumnSpec(
                data.get("date_column", "Date"), data.get("hour_column", "Hour"), data.get("price_column", "PUN")
            ),
            window_hours=data.get("window_hours", WINDOW_HOURS),
            split=SplitSpec(**pick("split")),
            market=MarketConfig(**pick("market")),
            hp=Hyperparameters(**pick("ddpg")),
            out_dir=_resolve(base, run["out_dir"]) if out_from_file else Path(run.get("out_dir", "runs/default")),
            checkpoint_every=run.get("checkpoint_every", 50),
            wall_clock=run.get("wall_clock", True),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.window_hours < 1:
        raise ConfigError("data.window_hours must be positive")
    if cfg.checkpoint_every < 0:
        raise ConfigError("run.checkpoint_every must be >= 0")
    return cfg


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def dump_config(cfg: RunConfig) -> str:
    """Render ``cfg`` back to the INI layout accepted by :func:`load_config`."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["data"] = {
        **({"path": str(cfg.data_path)} if cfg.data_path else {}),
        "date_column": cfg.columns.date,
        "hour_column": cfg.columns.hour,
        "price_column": cfg.columns.price,
        "window_hours": str(cfg.window_hours),
    }
    parser["split"] = {"train_fraction": repr(cfg.split.train_fraction), "seed": str(cfg.split.seed)}
    parser["market"] = {
        "costs": ", ".join(repr(c) for c in cfg.market.costs),
        "capacities": ", ".join(repr(d) for d in cfg.market.capacities),
        "price_floor": repr(cfg.market.price_floor),
        "price_cap": repr(cfg.market.price_cap),
    }
    parser["ddpg"] = {f.name: repr(getattr(cfg.hp, f.name)) for f in fields(cfg.hp)}
    parser["run"] = {
        "out_dir": str(cfg.out_dir),
        "checkpoint_every": str(cfg.checkpoint_every),
        "wall_clock": str(cfg.wall_clock).lower(),
    }
    import io

    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
