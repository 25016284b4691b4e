"""Checkpoint files: all parameter tensors plus the configs needed to rebuild
the exact inference pipeline. Stored as an .npz archive with a JSON metadata
entry; float64 arrays round-trip bit-exactly."""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineSettings, settings_from_dict
from .encoder import ToyEncoder, ToyEncoderParams
from .errors import ConfigError
from .model import HeadParams, PoolingStrategy
from .pipeline import JointModel, Preprocessor

FORMAT_VERSION = 1

PARAM_NAMES = (
    "token_emb", "pos_emb", "mix_weight", "mix_bias",
    "clarity_weight", "clarity_bias", "evasion_weight", "evasion_bias",
)


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    settings: PipelineSettings
    epoch: int
    val_combined_f1: float
    fold_index: int = -1
    seed: int = 0

    def pipeline_key(self) -> dict:
        """The config subset that must match across ensembled checkpoints."""
        d = self.settings.to_dict()
        return {k: d[k] for k in ("tokenizer", "encoder", "chunking", "model")}

    def build(self) -> tuple[Preprocessor, JointModel]:
        """Reconstruct an eval-mode pipeline over this checkpoint's arrays."""
        encoder = ToyEncoder(ToyEncoderParams.from_dict(self.params))
        heads = HeadParams.from_dict(self.params)
        model = JointModel(
            encoder=encoder,
            heads=heads,
            pooling=PoolingStrategy(self.settings.pooling),
            dropout=self.settings.dropout_config("eval"),
        )
        return self.settings.build_preprocessor(), model

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": FORMAT_VERSION,
            "settings": self.settings.to_dict(),
            "epoch": self.epoch,
            "val_combined_f1": self.val_combined_f1,
            "fold_index": self.fold_index,
            "seed": self.seed,
        }
        missing = [n for n in PARAM_NAMES if n not in self.params]
        if missing:
            raise ValueError(f"checkpoint is missing parameter tensors: {missing}")
        # Write through a file handle so numpy does not append ".npz".
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)),
                     **{n: self.params[n] for n in PARAM_NAMES})

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"checkpoint file not found: {path}")
        try:
            archive_ctx = np.load(path, allow_pickle=False)
        except (ValueError, OSError, zipfile.BadZipFile) as exc:
            raise ConfigError(f"{path}: not a readable checkpoint archive ({exc})") from None
        with archive_ctx as archive:
            if "__meta__" not in archive:
                raise ConfigError(f"{path}: not a checkpoint file (missing metadata)")
            meta = json.loads(str(archive["__meta__"][()]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ConfigError(
                    f"{path}: unsupported checkpoint format version "
                    f"{meta.get('format_version')!r}"
                )
            params = {n: archive[n] for n in PARAM_NAMES}
        settings_raw = dict(meta["settings"])
        return cls(
            params=params,
            settings=settings_from_dict(settings_raw),
            epoch=int(meta["epoch"]),
            val_combined_f1=float(meta["val_combined_f1"]),
            fold_index=int(meta.get("fold_index", -1)),
            seed=int(meta.get("seed", 0)),
        )
