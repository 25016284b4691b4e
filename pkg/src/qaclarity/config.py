"""Run configuration: dataclasses, JSON schema, defaults, validation.

Every training hyperparameter has a default matching the reference run
configuration; a config file only needs to override what differs. Unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .chunking import ChunkingConfig
from .errors import ConfigError
from .model import DropoutConfig, LossConfig, LossKind, PoolingStrategy
from .pipeline import Preprocessor
from .tokenization import build_tokenizer


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    batch_size: int = 8
    max_epochs: int = 15
    patience: int = 3
    clip_max_norm: float = 1.0
    base_seed: int = 42
    folds: int = 7

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError(
                f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}"
            )
        for name in ("weight_decay", "clip_max_norm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")


@dataclass(frozen=True)
class PipelineSettings:
    """Everything needed to build and train the model, minus file paths."""

    tokenizer: Mapping[str, Any] = field(
        default_factory=lambda: {"kind": "hash", "vocab_size": 8192, "prepend_start": True}
    )
    hidden_width: int = 64
    max_positions: int = 512
    stride: int | None = None  # None -> half the window
    pooling: PoolingStrategy = PoolingStrategy.MAX
    dropout_rate: float = 0.1
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.hidden_width < 1:
            raise ConfigError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.max_positions < 1:
            raise ConfigError(f"max_positions must be >= 1, got {self.max_positions}")
        # Validate eagerly so config errors surface before training starts.
        self.chunking_config()
        self.build_tokenizer()
        DropoutConfig(rate=self.dropout_rate, mode="train")

    def build_tokenizer(self):
        return build_tokenizer(self.tokenizer)

    def chunking_config(self) -> ChunkingConfig:
        stride = self.stride if self.stride is not None else max(1, self.max_positions // 2)
        return ChunkingConfig(window=self.max_positions, stride=stride)

    def build_preprocessor(self) -> Preprocessor:
        return Preprocessor(tokenizer=self.build_tokenizer(), chunking=self.chunking_config())

    def dropout_config(self, mode: str) -> DropoutConfig:
        return DropoutConfig(rate=self.dropout_rate, mode=mode)

    def to_dict(self) -> dict:
        loss = self.loss
        return {
            "tokenizer": dict(self.tokenizer),
            "encoder": {
                "hidden_width": self.hidden_width,
                "max_positions": self.max_positions,
            },
            "chunking": {"stride": self.stride},
            "model": {"pooling": self.pooling.value, "dropout": self.dropout_rate},
            "loss": {
                "kind": loss.kind.value,
                "focal_gamma": loss.focal_gamma,
                "clarity_weights": list(loss.clarity_weights) if loss.clarity_weights else None,
                "evasion_weights": list(loss.evasion_weights) if loss.evasion_weights else None,
                "clarity_enabled": loss.clarity_enabled,
                "evasion_enabled": loss.evasion_enabled,
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "warmup_fraction": self.train.warmup_fraction,
                "weight_decay": self.train.weight_decay,
                "batch_size": self.train.batch_size,
                "max_epochs": self.train.max_epochs,
                "patience": self.train.patience,
                "clip_max_norm": self.train.clip_max_norm,
                "base_seed": self.train.base_seed,
                "folds": self.train.folds,
            },
        }


@dataclass(frozen=True)
class RunConfig:
    settings: PipelineSettings = field(default_factory=PipelineSettings)
    train_path: str | None = None
    annotated_path: str | None = None
    output_dir: str = "runs/default"
    threads: int = 1

    def to_dict(self) -> dict:
        out = {
            "data": {"train": self.train_path, "annotated": self.annotated_path},
            "output_dir": self.output_dir,
            "threads": self.threads,
        }
        out.update(self.settings.to_dict())
        return out


def _check_keys(section: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _section(raw: Mapping, name: str) -> Mapping:
    value = raw.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def _weights_tuple(value, name: str):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{name} must be a list of numbers or null")
    return tuple(float(x) for x in value)


def settings_from_dict(raw: Mapping) -> PipelineSettings:
    _check_keys(raw, {"tokenizer", "encoder", "chunking", "model", "loss", "train"},
                "pipeline settings")
    defaults = PipelineSettings()

    tok = _section(raw, "tokenizer")
    _check_keys(tok, {"kind", "vocab_size", "prepend_start", "table"}, "tokenizer")
    # Defaults only apply to the default tokenizer kind; a table config is
    # taken as-is so it round-trips through checkpoints unchanged.
    if tok.get("kind", "hash") == "hash":
        tokenizer = dict(defaults.tokenizer)
        tokenizer.update(tok)
    else:
        tokenizer = dict(tok)
        tokenizer.setdefault("prepend_start", True)

    enc = _section(raw, "encoder")
    _check_keys(enc, {"hidden_width", "max_positions"}, "encoder")
    chk = _section(raw, "chunking")
    _check_keys(chk, {"stride"}, "chunking")
    mdl = _section(raw, "model")
    _check_keys(mdl, {"pooling", "dropout"}, "model")

    los = _section(raw, "loss")
    _check_keys(los, {"kind", "focal_gamma", "clarity_weights", "evasion_weights",
                      "clarity_enabled", "evasion_enabled"}, "loss")
    try:
        loss_kind = LossKind(los.get("kind", LossKind.CROSS_ENTROPY.value))
    except ValueError:
        raise ConfigError(f"unknown loss kind {los.get('kind')!r}") from None
    loss_cfg = LossConfig(
        kind=loss_kind,
        focal_gamma=float(los.get("focal_gamma", 2.0)),
        clarity_weights=_weights_tuple(los.get("clarity_weights"), "clarity_weights"),
        evasion_weights=_weights_tuple(los.get("evasion_weights"), "evasion_weights"),
        clarity_enabled=bool(los.get("clarity_enabled", True)),
        evasion_enabled=bool(los.get("evasion_enabled", True)),
    )

    trn = _section(raw, "train")
    _check_keys(trn, {"learning_rate", "warmup_fraction", "weight_decay", "batch_size",
                      "max_epochs", "patience", "clip_max_norm", "base_seed", "folds"},
                "train")
    base = TrainConfig()
    train_cfg = TrainConfig(
        learning_rate=float(trn.get("learning_rate", base.learning_rate)),
        warmup_fraction=float(trn.get("warmup_fraction", base.warmup_fraction)),
        weight_decay=float(trn.get("weight_decay", base.weight_decay)),
        batch_size=int(trn.get("batch_size", base.batch_size)),
        max_epochs=int(trn.get("max_epochs", base.max_epochs)),
        patience=int(trn.get("patience", base.patience)),
        clip_max_norm=float(trn.get("clip_max_norm", base.clip_max_norm)),
        base_seed=int(trn.get("base_seed", base.base_seed)),
        folds=int(trn.get("folds", base.folds)),
    )

    try:
        pooling = PoolingStrategy(mdl.get("pooling", PoolingStrategy.MAX.value))
    except ValueError:
        raise ConfigError(f"unknown pooling strategy {mdl.get('pooling')!r}") from None

    stride = chk.get("stride", defaults.stride)
    return PipelineSettings(
        tokenizer=tokenizer,
        hidden_width=int(enc.get("hidden_width", defaults.hidden_width)),
        max_positions=int(enc.get("max_positions", defaults.max_positions)),
        stride=None if stride is None else int(stride),
        pooling=pooling,
        dropout_rate=float(mdl.get("dropout", defaults.dropout_rate)),
        loss=loss_cfg,
        train=train_cfg,
    )


def run_config_from_dict(raw: Mapping) -> RunConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("run config must be a JSON object")
    _check_keys(raw, {"data", "output_dir", "threads", "tokenizer", "encoder", "chunking",
                      "model", "loss", "train"}, "run config")
    data = _section(raw, "data")
    _check_keys(data, {"train", "annotated"}, "data")
    settings = settings_from_dict(
        {k: raw[k] for k in ("tokenizer", "encoder", "chunking", "model", "loss", "train")
         if k in raw}
    )
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    return RunConfig(
        settings=settings,
        train_path=data.get("train"),
        annotated_path=data.get("annotated"),
        output_dir=str(raw.get("output_dir", "runs/default")),
        threads=threads,
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return run_config_from_dict(raw)


def with_overrides(cfg: RunConfig, *, seed: int | None = None, out: str | None = None,
                   threads: int | None = None) -> RunConfig:
    """Apply command-line overrides on top of a loaded config."""
    settings = cfg.settings
    if seed is not None:
        settings = replace(settings, train=replace(settings.train, base_seed=seed))
    return RunConfig(
        settings=settings,
        train_path=cfg.train_path,
        annotated_path=cfg.annotated_path,
        output_dir=out if out is not None else cfg.output_dir,
        threads=threads if threads is not None else cfg.threads,
    )


def schedule_total_steps(n_train: int, batch_size: int, max_epochs: int) -> int:
    """Steps the learning-rate schedule is resolved over, fixed up front."""
    return math.ceil(n_train / batch_size) * max_epochs
