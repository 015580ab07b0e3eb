"""INI-style run configuration.

Three optional sections map onto :class:`ModelConfig`, :class:`LossWeights`
(plus ``tau`` and ``feature_extractor``) and :class:`TrainConfig`::

    [model]
    embed_dim = 64
    heads = 4
    pe_mode = conv

    [loss]
    lambda_edg = 5000
    edge_loss = true
    tau = 0.2
    feature_extractor = proxy:0

    [train]
    iterations = 200
    lr0 = 0.0005

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .edges import DEFAULT_TAU
from .losses import LossWeights
from .model import ModelConfig


@dataclass
class TrainConfig:
    iterations: int = 200
    batch_size: int = 2
    lr0: float = 1e-4
    warmup_steps: int = 100
    lr_decay: float = 5e-5
    crop: int = 64
    shorter_side: int = 128
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int = 100
    tau: float = DEFAULT_TAU
    feature_extractor: str = "proxy:0"

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop > self.shorter_side:
            raise ValueError(f"crop {self.crop} exceeds shorter_side {self.shorter_side}")
        if self.crop % 8:
            raise ValueError(f"crop {self.crop} must be a multiple of 8")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)


_LOSS_EXTRAS = {"tau": "tau", "feature_extractor": "feature_extractor"}


def _convert(raw: str, like):
    if isinstance(like, bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw.strip()


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text, source=source)
    unknown = set(parser.sections()) - {"model", "loss", "train"}
    if unknown:
        raise ValueError(f"{source}: unknown section(s) {sorted(unknown)}")

    base = RunConfig()
    updates: dict[str, dict] = {"model": {}, "loss": {}, "train": {}}
    targets = {
        "model": {f.name: ("model", f.name) for f in fields(ModelConfig)},
        "loss": {f.name: ("loss", f.name) for f in fields(LossWeights) if f.name != "edge_enabled"},
        "train": {f.name: ("train", f.name) for f in fields(TrainConfig)},
    }
    targets["loss"]["edge_loss"] = ("loss", "edge_enabled")
    for key, attr in _LOSS_EXTRAS.items():
        targets["loss"][key] = ("train", attr)

    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in targets[section]:
                raise ValueError(f"{source}: unknown key {key!r} in [{section}]")
            group, attr = targets[section][key]
            like = getattr(getattr(base, group), attr)
            try:
                updates[group][attr] = _convert(raw, like)
            except ValueError as exc:
                raise ValueError(f"{source}: bad value for {key!r}: {exc}") from None

    return RunConfig(
        model=replace(base.model, **updates["model"]),
        loss=replace(base.loss, **updates["loss"]),
        train=replace(base.train, **updates["train"]),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(cfg: RunConfig) -> str:
    lines = ["[model]"]
    lines += [f"{f.name} = {getattr(cfg.model, f.name)}" for f in fields(ModelConfig)]
    lines += ["", "[loss]"]
    for f in fields(LossWeights):
        key = "edge_loss" if f.name == "edge_enabled" else f.name
        lines.append(f"{key} = {str(getattr(cfg.loss, f.name)).lower() if f.name == 'edge_enabled' else getattr(cfg.loss, f.name)}")
    lines += [f"{key} = {getattr(cfg.train, attr)}" for key, attr in _LOSS_EXTRAS.items()]
    lines += ["", "[train]"]
    lines += [f"{f.name} = {getattr(cfg.train, f.name)}" for f in fields(TrainConfig) if f.name not in _LOSS_EXTRAS]
    return "\n".join(lines) + "\n"
