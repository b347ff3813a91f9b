"""INI-style experiment configuration.

Example::

    [experiment]
    seed = 0
    leakage = LSB
    network = desk_mlp
    profiling_sizes = 3000, 5000, 10000, all
    variants = original, mixup
    alphas = 0.5

    [dataset]
    source = synthetic            ; or: files
    profiling_path = prof.scat     ; used when source = files
    attack_path = attack.scat

    [simulate]
    n_traces = 20000
    attack_traces = 5000
    noise_sigma = 1.0

    [train]
    learning_rate = 1e-5
    max_epochs = 50

    [attack]
    n_repetitions = 50
    n_max = 2000
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .attack import AttackConfig
from .labeling import LeakageModel
from .mixup import PAIRINGS
from .nn.network import ARCHITECTURES
from .nn.train import TrainConfig
from .synth import RandomDelay, SimConfig

VARIANTS = ("original", "mixup")
DEFAULT_KEY = "2b7e151628aed2a6abf7158809cf4f3c"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    leakage: LeakageModel = LeakageModel.LSB
    network: str = "desk_mlp"
    profiling_sizes: tuple = (3000, 5000, 10000, "all")
    variants: tuple = VARIANTS
    alphas: tuple = (0.5,)
    expansion_ratio: float = 0.5
    pairing: str = "disjoint-shuffle"
    standardize: bool = True
    selection: str = "val_loss"
    source: str = "synthetic"
    profiling_path: str | None = None
    attack_path: str | None = None
    sim: SimConfig = field(default_factory=lambda: SimConfig(n_traces=20000, true_key=parse_key(DEFAULT_KEY)))
    attack_traces: int = 5000
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    save_models: bool = True

    def validate(self) -> "ExperimentConfig":
        if not self.profiling_sizes:
            raise ConfigError("profiling_sizes must not be empty")
        for s in self.profiling_sizes:
            if s != "all" and (not isinstance(s, int) or s < 2):
                raise ConfigError(f"bad profiling size {s!r}")
        if not self.variants or any(v not in VARIANTS for v in self.variants):
            raise ConfigError(f"variants must be drawn from {VARIANTS}")
        if "mixup" in self.variants and (not self.alphas or any(a <= 0 for a in self.alphas)):
            raise ConfigError("mixup needs at least one alpha > 0")
        if not 0 < self.expansion_ratio <= 1:
            raise ConfigError("expansion_ratio must be in (0, 1]")
        if self.pairing not in PAIRINGS:
            raise ConfigError(f"pairing must be one of {PAIRINGS}")
        if self.network not in ARCHITECTURES:
            raise ConfigError(f"network must be one of {sorted(ARCHITECTURES)}")
        if self.selection not in ("val_loss", "attack"):
            raise ConfigError("selection must be val_loss or attack")
        if self.source not in ("synthetic", "files"):
            raise ConfigError("dataset source must be synthetic or files")
        if self.source == "files" and not (self.profiling_path and self.attack_path):
            raise ConfigError("file source needs profiling_path and attack_path")
        try:
            self.sim.validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.attack.n_repetitions < 1:
            raise ConfigError("n_repetitions must be >= 1")
        return self


def parse_key(text: str) -> tuple:
    text = text.strip().lower().removeprefix("0x")
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ConfigError(f"key must be 32 hex digits, got {text!r}") from None
    if len(raw) != 16:
        raise ConfigError(f"key must be 16 bytes, got {len(raw)}")
    return tuple(raw)


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _list(v: str) -> list[str]:
    return [s.strip() for s in v.split(",") if s.strip()]


def _size(s: str):
    return "all" if s.lower() == "all" else int(s)


# section -> key -> (target, converter); target "sim.x", "train.x", "attack.x" or a top-level field
_SCHEMA = {
    "experiment": {
        "seed": ("seed", int),
        "leakage": ("leakage", LeakageModel.parse),
        "network": ("network", str),
        "profiling_sizes": ("profiling_sizes", lambda v: tuple(_size(s) for s in _list(v))),
        "variants": ("variants", lambda v: tuple(_list(v))),
        "alphas": ("alphas", lambda v: tuple(float(s) for s in _list(v))),
        "expansion_ratio": ("expansion_ratio", float),
        "pairing": ("pairing", str),
        "standardize": ("standardize", _bool),
        "selection": ("selection", str),
        "save_models": ("save_models", _bool),
    },
    "dataset": {
        "source": ("source", str),
        "profiling_path": ("profiling_path", str),
        "attack_path": ("attack_path", str),
    },
    "simulate": {
        "n_traces": ("sim.n_traces", int),
        "attack_traces": ("attack_traces", int),
        "n_samples": ("sim.n_samples", int),
        "target_byte": ("sim.target_byte", int),
        "key": ("sim.true_key", parse_key),
        "leak_center": ("sim.leak_center", int),
        "leak_width": ("sim.leak_width", int),
        "leak_gain": ("sim.leak_gain", float),
        "leak_offset": ("sim.leak_offset", float),
        "noise_sigma": ("sim.noise_sigma", float),
        "desync_window": ("sim.desync_window", int),
        "max_delays": ("sim.max_delays", int),
        "delay_len": ("sim.delay_len", int),
        "vary_key": ("sim.vary_key", _bool),
    },
    "train": {
        "learning_rate": ("train.learning_rate", float),
        "rho": ("train.rho", float),
        "epsilon": ("train.epsilon", float),
        "batch_size": ("train.batch_size", int),
        "max_epochs": ("train.max_epochs", int),
        "validation_fraction": ("train.validation_fraction", float),
    },
    "attack": {
        "n_repetitions": ("attack.n_repetitions", int),
        "n_max": ("attack.n_max", int),
    },
}


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    top, sim, train, attack = {}, {}, {}, {}
    buckets = {"sim": sim, "train": train, "attack": attack}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            target, conv = _SCHEMA[section][key]
            try:
                value = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
            if "." in target:
                bucket, name = target.split(".")
                buckets[bucket][name] = value
            else:
                top[target] = value
    cfg = base or ExperimentConfig()
    max_delays = sim.pop("max_delays", None)
    delay_len = sim.pop("delay_len", None)
    new_sim = dataclasses.replace(cfg.sim, **sim)
    if max_delays is not None or delay_len is not None:
        rd = new_sim.random_delay or RandomDelay(0, 0)
        new_sim = dataclasses.replace(
            new_sim,
            random_delay=RandomDelay(
                rd.max_delays if max_delays is None else max_delays,
                rd.delay_len if delay_len is None else delay_len,
            ),
        )
    cfg = dataclasses.replace(
        cfg,
        sim=new_sim,
        train=dataclasses.replace(cfg.train, **train),
        attack=dataclasses.replace(cfg.attack, **attack),
        **top,
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
