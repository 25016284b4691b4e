"""Fold-model ensembling by probability averaging, plus prediction file IO."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import Checkpoint
from .dataset import ClarityLabel, EvasionLabel, Instance
from .errors import ConfigError, DataError


@dataclass
class EnsemblePrediction:
    instance_id: str
    clarity_probs: np.ndarray       # (3,), averaged over models
    evasion_probs: np.ndarray       # (9,)
    clarity: ClarityLabel
    evasion: EvasionLabel
    per_model_clarity: np.ndarray   # (k, 3), kept for diagnostics
    per_model_evasion: np.ndarray   # (k, 9)

    def to_record(self) -> dict:
        return {
            "id": self.instance_id,
            "clarity": self.clarity.display_name,
            "evasion": self.evasion.display_name,
            "clarity_probs": [float(x) for x in self.clarity_probs],
            "evasion_probs": [float(x) for x in self.evasion_probs],
        }


class Ensemble:
    """k fold models behind one predict call.

    All checkpoints must share the tokenizer, chunking, and model configs;
    averaged class probabilities are reduced over models in list order and
    ties at argmax resolve to the lowest class code.
    """

    def __init__(self, checkpoints: Sequence[Checkpoint]):
        if not checkpoints:
            raise ConfigError("ensemble needs at least one checkpoint")
        key = checkpoints[0].pipeline_key()
        for i, ckpt in enumerate(checkpoints[1:], start=1):
            if ckpt.pipeline_key() != key:
                raise ConfigError(
                    f"checkpoint {i} has a different pipeline config than checkpoint 0; "
                    "ensembles require identical tokenizer/chunking/model settings"
                )
        self.checkpoints = list(checkpoints)
        built = [c.build() for c in self.checkpoints]
        self.preprocessor = built[0][0]
        self.models = [model for _, model in built]

    def predict(self, instance: Instance) -> EnsemblePrediction:
        chunks = self.preprocessor.prepare(instance)
        k = len(self.models)
        per_c = np.empty((k, 3))
        per_e = np.empty((k, 9))
        for i, model in enumerate(self.models):
            pc, pe = model.predict_probs(chunks)
            per_c[i] = pc
            per_e[i] = pe
        avg_c = per_c.mean(axis=0)
        avg_e = per_e.mean(axis=0)
        return EnsemblePrediction(
            instance_id=instance.id,
            clarity_probs=avg_c,
            evasion_probs=avg_e,
            clarity=ClarityLabel(int(avg_c.argmax())),
            evasion=EvasionLabel(int(avg_e.argmax())),
            per_model_clarity=per_c,
            per_model_evasion=per_e,
        )

    def predict_many(self, instances: Sequence[Instance]) -> list[EnsemblePrediction]:
        return [self.predict(inst) for inst in instances]


def ensemble_predict(instance: Instance,
                     checkpoints: Sequence[Checkpoint]) -> EnsemblePrediction:
    """One-shot convenience wrapper; build an Ensemble for repeated use."""
    return Ensemble(checkpoints).predict(instance)


# ---------------------------
# Prediction file IO
# ---------------------------

def write_predictions(rows: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_submission(rows: Sequence[dict], path, task: str) -> None:
    """Minimal two-column variant: {"id", "label"} for one subtask."""
    if task not in ("clarity", "evasion"):
        raise ValueError(f"task must be 'clarity' or 'evasion', got {task!r}")
    slim = [{"id": row["id"], "label": row[task]} for row in rows]
    write_predictions(slim, path)


def read_predictions(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"prediction file not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON: {exc.msg}", path=path, line=lineno) from None
    return rows
