"""INI-style run configuration with strict key checking.

Every section and key is listed in :data:`SCHEMA`; anything else is an error,
so a typo such as ``esp2`` fails loudly instead of silently using a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .adversary import AttackConfig
from .errors import ConfigError
from .training import GRAPH_LEVEL_DEFAULTS, TrainConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _kinds(cls, skip=()) -> dict[str, str]:
    # dataclass annotations are strings under postponed evaluation
    return {f.name: str(getattr(f.type, "__name__", f.type)) for f in fields(cls) if f.name not in skip}

_PARSERS = {"int": int, "float": float, "bool": _bool, "str": str, "ints": _int_list}

SCHEMA: dict[str, dict[str, str]] = {
    "run": {"mode": "str", "seed": "int", "out": "str"},
    "data": {"path": "str", "name": "str"},
    "train": _kinds(TrainConfig, skip=("attack", "seed")),
    "attack": _kinds(AttackConfig),
    "eval": {
        "checkpoint": "str",
        "repetitions": "int",
        "iterations": "int",
        "folds": "int",
        "train_fraction": "float",
        "valid_fraction": "float",
    },
    "study": {"checkpoint": "str", "p": "float", "steps": "int"},
    "sbm": {
        "block_sizes": "ints",
        "p_in": "float",
        "p_out": "float",
        "feature_dim": "int",
        "feature_noise": "float",
        "output": "str",
    },
}


@dataclass
class RunConfig:
    mode: str = "node"
    seed: int = 0
    out: str = "runs/default"
    data_path: str | None = None
    data_name: str = ""
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: dict = field(default_factory=lambda: dict(repetitions=20, iterations=500, folds=5,
                                                    train_fraction=0.1, valid_fraction=0.1, checkpoint=None))
    study: dict = field(default_factory=lambda: dict(p=0.03, steps=60, checkpoint=None))
    sbm: dict = field(default_factory=lambda: dict(block_sizes=[50, 50], p_in=0.2, p_out=0.02,
                                                   feature_dim=16, feature_noise=0.6, output="sbm.graph"))
    source: Path | None = None
    out_override: str | None = None

    def out_dir(self) -> Path:
        """``--out`` is taken as given; ``[run] out`` is relative to the config file."""
        if self.out_override is not None:
            return Path(self.out_override)
        return self.resolve(self.out)

    def resolve(self, path: str | None) -> Path | None:
        """Paths in a config file are relative to that file."""
        if path is None:
            return None
        p = Path(path)
        if p.is_absolute() or self.source is None:
            return p
        return self.source.parent / p


def _parse_section(cp: configparser.ConfigParser, section: str) -> dict:
    schema = SCHEMA[section]
    out = {}
    for key, raw in cp.items(section):
        if key not in schema:
            raise ConfigError(f"unknown key [{section}] {key}")
        try:
            out[key] = _PARSERS[schema[key]](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {exc}") from None
    return out


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    parsed = {s: _parse_section(cp, s) if cp.has_section(s) else {} for s in SCHEMA}

    run = parsed["run"]
    mode = run.get("mode", "node")
    if mode not in ("node", "graph"):
        raise ConfigError("[run] mode must be 'node' or 'graph'")
    seed = run.get("seed", 0)
    base = TrainConfig() if mode == "node" else TrainConfig(**GRAPH_LEVEL_DEFAULTS)
    try:
        attack = replace(base.attack, **parsed["attack"])
        train = replace(base, attack=attack, seed=seed, **parsed["train"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    cfg = RunConfig(mode=mode, seed=seed, train=train, source=source)
    cfg.out = run.get("out", cfg.out)
    cfg.data_path = parsed["data"].get("path")
    cfg.data_name = parsed["data"].get("name", "")
    cfg.eval.update(parsed["eval"])
    cfg.study.update(parsed["study"])
    cfg.sbm.update(parsed["sbm"])
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    cfg.seed = seed
    cfg.train = replace(cfg.train, seed=seed)
    return cfg
