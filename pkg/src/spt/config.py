"""Run configuration: one JSON document, overridable with ``key.path=value`` flags."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .datagen import GenSpec
from .errors import SpecError
from .model import ModelConfig

FORMAT_VERSION = 1


@dataclass
class PretrainCfg:
    epochs: int = 3
    lr: float = 3e-3
    batch_size: int = 16
    optimizer: str = "adam"
    decay: bool = True


@dataclass
class TrainCfg:
    # P3 always runs at lr / 10; epochs are P1, P2, P3
    lr: float = 3e-2
    epochs: tuple = (3, 3, 2)
    batch_size: int = 32
    optimizer: str = "adam"

    def __post_init__(self):
        self.epochs = tuple(self.epochs)


@dataclass
class EvalCfg:
    k: int = 5
    copy_constraint: bool = True
    soft_match_threshold: float = 0.5
    bench_queries: int = 100


@dataclass
class Paths:
    data_dir: str = "data"
    out_dir: str = "runs"


@dataclass
class Config:
    seed: int = 7
    model: ModelConfig = field(default_factory=ModelConfig)
    data: GenSpec = field(default_factory=lambda: GenSpec(n_train=12000, open_ratio=0.15))
    pretrain: PretrainCfg = field(default_factory=PretrainCfg)
    train: TrainCfg = field(default_factory=TrainCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)
    paths: Paths = field(default_factory=Paths)

    def validate(self) -> None:
        self.data.validate()
        if self.pretrain.lr <= 0 or self.train.lr <= 0:
            raise SpecError("learning rates must be positive")
        if len(self.train.epochs) != 3 or min(self.train.epochs) < 0:
            raise SpecError("train.epochs needs three non-negative counts")
        if self.eval.k < 1:
            raise SpecError("eval.k must be >= 1")

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["train"]["epochs"] = list(self.train.epochs)
        return {"format_version": FORMAT_VERSION, **obj}

    @classmethod
    def from_json(cls, obj: dict) -> "Config":
        obj = {k: v for k, v in obj.items() if k != "format_version"}
        cfg = cls()
        for key, val in obj.items():
            _assign(cfg, [key], val)
        return cfg


def _assign(target, path: list[str], value) -> None:
    head = path[0]
    names = {f.name for f in fields(target)}
    if head not in names:
        raise SpecError(f"unknown config key {'.'.join(path)!r}")
    cur = getattr(target, head)
    if len(path) == 1:
        if is_dataclass(cur) and isinstance(value, dict):
            for k, v in value.items():
                _assign(cur, [k], v)
            if hasattr(cur, "__post_init__"):
                cur.__post_init__()
            return
        if is_dataclass(cur):
            raise SpecError(f"config section {head!r} needs an object, got {value!r}")
        setattr(target, head, _coerce(cur, value, head))
        return
    if not is_dataclass(cur):
        raise SpecError(f"config key {head!r} has no sub-keys")
    _assign(cur, path[1:], value)


def _coerce(cur, value, name):
    if isinstance(cur, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise SpecError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    try:
        if isinstance(cur, int) and not isinstance(value, bool):
            return int(value)
        if isinstance(cur, float):
            return float(value)
        if isinstance(cur, tuple):
            return tuple(value)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{name}: bad value {value!r}") from exc
    return value


def apply_overrides(cfg: Config, pairs) -> Config:
    """Apply ``a.b=value`` strings; values are parsed as JSON when possible."""
    for item in pairs or ():
        if "=" not in item:
            raise SpecError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _assign(cfg, key.strip().split("."), value)
    try:
        for sub in (cfg.model, cfg.train):
            sub.__post_init__()
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from exc
    return cfg


def load_config(path=None, overrides=()) -> Config:
    cfg = Config()
    if path:
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read config {path}: {exc}") from exc
        try:
            cfg = Config.from_json(obj)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid config {path}: {exc}") from exc
    cfg = apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg
