"""Stratified k-fold training: fold planning, schedule, optimizer, per-fold
training loops with early stopping and combined-F1 checkpoint selection."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .checkpoint import Checkpoint
from .config import PipelineSettings, TrainConfig, schedule_total_steps
from .dataset import (
    NUM_CLARITY_CLASSES,
    NUM_EVASION_CLASSES,
    ClarityLabel,
    EvasionLabel,
    Instance,
)
from .encoder import ToyEncoder, ToyEncoderParams
from .errors import DataError, NumericError
from .evaluation import combined_f1, macro_f1
from .model import HeadParams, LossConfig, LossKind, inverse_frequency_weights
from .pipeline import JointModel, zero_grads

__all__ = [
    "TrainConfig", "FoldPlan", "stratified_folds", "lr_at", "clip_gradients",
    "AdamWState", "adamw_step", "EarlyStopper", "EpochLog", "FoldResult",
    "train_fold", "CvResult", "run_cv", "resolve_loss_weights",
]


# ---------------------------
# Fold planning
# ---------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]  # instance id -> fold index
    base_seed: int

    def fold_seed(self, fold: int) -> int:
        return self.base_seed + fold

    def ids_in_fold(self, fold: int) -> list[str]:
        return [i for i, f in self.assignment.items() if f == fold]


def stratified_folds(instances: Sequence[Instance], k: int, seed: int) -> FoldPlan:
    """Deal instances round-robin to k folds within each clarity class.

    Instances are shuffled per class with the seed first, so per-fold class
    counts stay within one of the proportional share.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    by_class: dict[int, list[str]] = {int(c): [] for c in ClarityLabel}
    for inst in instances:
        by_class[int(inst.effective_clarity())].append(inst.id)

    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    for code in sorted(by_class):
        ids = by_class[code]
        if 0 < len(ids) < k:
            raise DataError(
                f"clarity class {ClarityLabel(code).display_name!r} has only "
                f"{len(ids)} instances, fewer than k={k} folds"
            )
        order = rng.permutation(len(ids))
        for j, idx in enumerate(order):
            assignment[ids[idx]] = j % k
    # Preserve input order for reproducible iteration over the mapping.
    ordered = {inst.id: assignment[inst.id] for inst in instances}
    return FoldPlan(k=k, assignment=ordered, base_seed=seed)


# ---------------------------
# Schedule, clipping, optimizer
# ---------------------------

def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak rate, then linear decay to zero.

    `step` is 0-based; the warmup spans the first ceil(warmup_fraction *
    total_steps) steps and the rate hits exactly the peak at the boundary.
    """
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = math.ceil(cfg.warmup_fraction * total_steps)
    if step < warmup:
        return cfg.learning_rate * step / warmup
    if total_steps == warmup:
        return cfg.learning_rate
    return cfg.learning_rate * (total_steps - step) / (total_steps - warmup)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients by max_norm/g when the global L2 norm g exceeds
    max_norm; otherwise leave them untouched. Scaling is in place."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(m=zero_grads(params), v=zero_grads(params))


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState, lr: float, weight_decay: float,
               betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """Decoupled-weight-decay adaptive-moment update, in place.

    The decay multiplies parameters by (1 - lr * weight_decay) independently
    of the gradient-driven step.
    """
    beta1, beta2 = betas
    state.t += 1
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p *= 1.0 - lr * weight_decay
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


# ---------------------------
# Early stopping
# ---------------------------

class EarlyStopper:
    """Patience over strict improvements; ties keep the earliest best epoch."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_score = -math.inf
        self.best_epoch = -1
        self.streak = 0

    def observe(self, epoch: int, score: float) -> bool:
        """Record one epoch's validation score; True iff it is a new best."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.streak = 0
            return True
        self.streak += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.streak >= self.patience


# ---------------------------
# Per-fold training
# ---------------------------

@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_clarity_f1: float
    val_evasion_f1: float
    val_combined_f1: float
    learning_rate: float


@dataclass
class FoldResult:
    checkpoint: Checkpoint
    epochs: list[EpochLog]
    val_ids: list[str]
    val_clarity_probs: np.ndarray  # (n_val, 3), from the selected checkpoint
    val_evasion_probs: np.ndarray  # (n_val, 9)


def _validation_scores(model: JointModel, chunksets, gold_c, gold_e,
                       loss_cfg: LossConfig):
    probs_c = np.empty((len(chunksets), NUM_CLARITY_CLASSES))
    probs_e = np.empty((len(chunksets), NUM_EVASION_CLASSES))
    for i, cs in enumerate(chunksets):
        pc, pe = model.predict_probs(cs)
        probs_c[i] = pc
        probs_e[i] = pe
    pred_c = probs_c.argmax(axis=1)
    pred_e = probs_e.argmax(axis=1)
    f1_c = macro_f1(gold_c, pred_c, NUM_CLARITY_CLASSES)
    f1_e = macro_f1(gold_e, pred_e, NUM_EVASION_CLASSES)
    # Checkpoint selection averages the enabled heads only, so single-task
    # runs select on the head they actually train.
    if loss_cfg.clarity_enabled and loss_cfg.evasion_enabled:
        selection = combined_f1(f1_c, f1_e)
    elif loss_cfg.clarity_enabled:
        selection = f1_c
    else:
        selection = f1_e
    return f1_c, f1_e, selection, probs_c, probs_e


def train_fold(train_instances: Sequence[Instance], val_instances: Sequence[Instance],
               settings: PipelineSettings, seed: int, fold_index: int = -1) -> FoldResult:
    """Train one fold model and return its best checkpoint plus the log.

    One seeded generator drives initialization, epoch shuffling, and dropout,
    so identical inputs and seed reproduce the checkpoint bitwise.
    """
    if not val_instances:
        raise ValueError("validation split must be non-empty")
    overlap = {i.id for i in train_instances} & {i.id for i in val_instances}
    if overlap:
        raise ValueError(f"train/val splits overlap on ids: {sorted(overlap)[:5]}")

    cfg = settings.train
    pre = settings.build_preprocessor()
    rng = np.random.default_rng(seed)

    vocab_size = pre.tokenizer.spec.vocab_size
    enc_params = ToyEncoderParams.init(vocab_size, settings.hidden_width,
                                       settings.max_positions, rng)
    heads = HeadParams.init(settings.hidden_width, rng)
    model = JointModel(
        encoder=ToyEncoder(enc_params),
        heads=heads,
        pooling=settings.pooling,
        dropout=settings.dropout_config("train"),
    )
    params = model.params
    state = AdamWState.init(params)

    train_chunks = [pre.prepare(inst) for inst in train_instances]
    gold_c = np.array([int(inst.effective_clarity()) for inst in train_instances])
    gold_e = np.array([int(inst.effective_evasion()) for inst in train_instances])
    val_chunks = [pre.prepare(inst) for inst in val_instances]
    val_gold_c = np.array([int(inst.effective_clarity()) for inst in val_instances])
    val_gold_e = np.array([int(inst.effective_evasion()) for inst in val_instances])

    n = len(train_instances)
    total_steps = schedule_total_steps(n, cfg.batch_size, cfg.max_epochs)
    stopper = EarlyStopper(cfg.patience)
    best_params: dict[str, np.ndarray] | None = None
    epochs: list[EpochLog] = []
    step = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n, cfg.batch_size):  # the last partial batch is kept
            batch = order[lo: lo + cfg.batch_size]
            grads = zero_grads(params)
            batch_loss = 0.0
            for idx in batch:
                batch_loss += model.accumulate_loss_and_grads(
                    train_chunks[idx], gold_c[idx], gold_e[idx],
                    settings.loss, rng, grads,
                )
            batch_loss /= batch.shape[0]
            if not math.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss {batch_loss} at epoch {epoch}, step {step} "
                    f"(fold {fold_index}, seed {seed})"
                )
            for g in grads.values():
                g /= batch.shape[0]
            clip_gradients(grads, cfg.clip_max_norm)
            lr = lr_at(step, total_steps, cfg)
            adamw_step(params, grads, state, lr, cfg.weight_decay)
            step += 1
            epoch_loss += batch_loss
            n_batches += 1

        f1_c, f1_e, selection, _, _ = _validation_scores(
            model, val_chunks, val_gold_c, val_gold_e, settings.loss
        )
        epochs.append(EpochLog(
            epoch=epoch,
            train_loss=epoch_loss / n_batches,
            val_clarity_f1=f1_c,
            val_evasion_f1=f1_e,
            val_combined_f1=combined_f1(f1_c, f1_e),
            learning_rate=lr_at(min(step, total_steps), total_steps, cfg),
        ))
        if stopper.observe(epoch, selection):
            best_params = {k: v.copy() for k, v in params.items()}
        if stopper.should_stop:
            break

    assert best_params is not None  # max_epochs >= 1 guarantees one observation
    checkpoint = Checkpoint(
        params=best_params,
        settings=settings,
        epoch=stopper.best_epoch,
        val_combined_f1=stopper.best_score,
        fold_index=fold_index,
        seed=seed,
    )

    # Out-of-fold probabilities come from the selected checkpoint, not the
    # final epoch's weights.
    _, best_model = checkpoint.build()
    _, _, _, probs_c, probs_e = _validation_scores(
        best_model, val_chunks, val_gold_c, val_gold_e, settings.loss
    )
    return FoldResult(
        checkpoint=checkpoint,
        epochs=epochs,
        val_ids=[inst.id for inst in val_instances],
        val_clarity_probs=probs_c,
        val_evasion_probs=probs_e,
    )


# ---------------------------
# Cross-validation driver
# ---------------------------

@dataclass
class CvResult:
    plan: FoldPlan
    checkpoints: list[Checkpoint]
    fold_results: list[FoldResult]
    oof_rows: list[dict]
    fold_clarity_f1: list[float]
    fold_evasion_f1: list[float]
    settings: PipelineSettings

    def summary(self) -> dict:
        c = np.array(self.fold_clarity_f1)
        e = np.array(self.fold_evasion_f1)
        return {
            "folds": self.plan.k,
            "clarity_f1_per_fold": self.fold_clarity_f1,
            "evasion_f1_per_fold": self.fold_evasion_f1,
            "clarity_f1_mean": float(c.mean()),
            "clarity_f1_std": float(c.std()),
            "evasion_f1_mean": float(e.mean()),
            "evasion_f1_std": float(e.std()),
            "combined_f1_mean": combined_f1(float(c.mean()), float(e.mean())),
        }


def resolve_loss_weights(loss_cfg: LossConfig, instances: Sequence[Instance]) -> LossConfig:
    """Fill in inverse-frequency class weights from the full training split.

    Computed once up front (not per fold) and recorded in the resolved config,
    so ablation runs are reproducible from the config file alone.
    """
    if loss_cfg.kind is not LossKind.CLASS_WEIGHTED:
        return loss_cfg
    updates = {}
    if loss_cfg.clarity_weights is None:
        counts = np.zeros(NUM_CLARITY_CLASSES)
        for inst in instances:
            counts[int(inst.effective_clarity())] += 1
        updates["clarity_weights"] = tuple(inverse_frequency_weights(counts))
    if loss_cfg.evasion_weights is None:
        counts = np.zeros(NUM_EVASION_CLASSES)
        for inst in instances:
            counts[int(inst.effective_evasion())] += 1
        updates["evasion_weights"] = tuple(inverse_frequency_weights(counts))
    return replace(loss_cfg, **updates) if updates else loss_cfg


def run_cv(instances: Sequence[Instance], settings: PipelineSettings,
           threads: int = 1) -> CvResult:
    """Train k fold models; fold i trains on every other fold and validates
    on fold i, producing out-of-fold predictions that cover each instance
    exactly once."""
    loss_cfg = resolve_loss_weights(settings.loss, instances)
    if loss_cfg is not settings.loss:
        settings = replace(settings, loss=loss_cfg)
    cfg = settings.train
    plan = stratified_folds(instances, cfg.folds, cfg.base_seed)

    by_fold: list[list[Instance]] = [[] for _ in range(plan.k)]
    for inst in instances:
        by_fold[plan.assignment[inst.id]].append(inst)

    def run_one(fold: int) -> FoldResult:
        train_split = [inst for f in range(plan.k) if f != fold for inst in by_fold[f]]
        return train_fold(train_split, by_fold[fold], settings,
                          seed=plan.fold_seed(fold), fold_index=fold)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fold_results = list(pool.map(run_one, range(plan.k)))
    else:
        fold_results = [run_one(fold) for fold in range(plan.k)]

    rows_by_id: dict[str, dict] = {}
    for fold, res in enumerate(fold_results):
        for i, inst_id in enumerate(res.val_ids):
            pc = res.val_clarity_probs[i]
            pe = res.val_evasion_probs[i]
            rows_by_id[inst_id] = {
                "id": inst_id,
                "clarity": ClarityLabel(int(pc.argmax())).display_name,
                "evasion": EvasionLabel(int(pe.argmax())).display_name,
                "clarity_probs": [float(x) for x in pc],
                "evasion_probs": [float(x) for x in pe],
                "fold": fold,
            }
    oof_rows = [rows_by_id[inst.id] for inst in instances]

    fold_c = []
    fold_e = []
    for res in fold_results:
        best = next(log for log in res.epochs if log.epoch == res.checkpoint.epoch)
        fold_c.append(best.val_clarity_f1)
        fold_e.append(best.val_evasion_f1)

    return CvResult(
        plan=plan,
        checkpoints=[r.checkpoint for r in fold_results],
        fold_results=fold_results,
        oof_rows=oof_rows,
        fold_clarity_f1=fold_c,
        fold_evasion_f1=fold_e,
        settings=settings,
    )
