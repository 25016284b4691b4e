"""Metrics and error analysis: macro-F1, combined score, any-annotator
scoring, confusion matrices, per-class accuracy/confidence, annotator
agreement strata, and Fleiss kappa.

Macro-F1 averages over every class of the fixed taxonomy, including classes
absent from the gold labels, with 0 substituted wherever a denominator is
zero. That convention is deterministic and strict; reports flag it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import (
    NUM_CLARITY_CLASSES,
    NUM_EVASION_CLASSES,
    ClarityLabel,
    EvasionLabel,
    Instance,
    majority_code,
)
from .errors import DataError

MACRO_F1_CONVENTION = "macro-F1 averaged over the full taxonomy; 0/0 counts as 0"


def macro_f1(gold: Sequence[int], pred: Sequence[int], num_classes: int) -> float:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape or gold.size == 0:
        raise ValueError("gold and pred must be equal-length, non-empty sequences")
    f1_sum = 0.0
    for c in range(num_classes):
        tp = int(((gold == c) & (pred == c)).sum())
        fp = int(((gold != c) & (pred == c)).sum())
        fn = int(((gold == c) & (pred != c)).sum())
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        f1_sum += f1
    return f1_sum / num_classes


def combined_f1(f1_clarity: float, f1_evasion: float) -> float:
    """Arithmetic mean of the two subtask scores."""
    if not (0.0 <= f1_clarity <= 1.0 and 0.0 <= f1_evasion <= 1.0):
        raise ValueError("F1 scores must lie in [0, 1]")
    return (f1_clarity + f1_evasion) / 2


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) int64, gold rows x predicted columns
    taxonomy: str = ""

    def row_normalized(self) -> tuple[np.ndarray, list[int]]:
        """Rows divided by their sums; all-zero rows stay zero and their
        indices are returned as a flag list."""
        totals = self.counts.sum(axis=1)
        empty = [int(i) for i in np.where(totals == 0)[0]]
        safe = np.where(totals == 0, 1, totals)
        return self.counts / safe[:, None], empty


def confusion(gold: Sequence[int], pred: Sequence[int], num_classes: int,
              taxonomy: str = "") -> ConfusionMatrix:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError("gold and pred must have equal length")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts=counts, taxonomy=taxonomy)


def resolve_any_annotator(pred: int, annotations: Sequence[int]) -> tuple[bool, int]:
    """Any-annotator scoring for one prediction.

    Correct iff the prediction matches any annotator. The effective gold,
    used only to place the instance in confusion matrices and F1 counts, is
    the prediction itself when correct and otherwise the annotation majority
    (lowest code on ties).
    """
    if not annotations:
        raise ValueError("annotation list must be non-empty")
    codes = [int(a) for a in annotations]
    pred = int(pred)
    if pred in codes:
        return True, pred
    return False, majority_code(codes)


@dataclass(frozen=True)
class ClassStats:
    code: int
    name: str
    count: int
    accuracy: float | None
    mean_confidence: float | None
    mean_confidence_misclassified: float | None

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "name": self.name,
            "n": self.count,
            "accuracy": self.accuracy,
            "mean_confidence": self.mean_confidence,
            "mean_confidence_misclassified": self.mean_confidence_misclassified,
        }


def per_class_stats(gold: Sequence[int], pred: Sequence[int],
                    confidences: Sequence[float] | None, num_classes: int,
                    names: Mapping[int, str] | None = None) -> list[ClassStats]:
    """Per gold class: instance count, accuracy, and mean prediction
    confidence over all instances of that class plus the misclassified-only
    variant. Confidence columns are omitted when no confidences are given."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError("gold and pred must have equal length")
    conf = None if confidences is None else np.asarray(confidences, dtype=np.float64)
    if conf is not None and conf.shape != gold.shape:
        raise ValueError("confidences must align with gold/pred")

    stats = []
    for c in range(num_classes):
        in_class = gold == c
        n = int(in_class.sum())
        correct = in_class & (pred == gold)
        accuracy = float(correct.sum() / n) if n else None
        mean_conf = mean_conf_wrong = None
        if conf is not None and n:
            mean_conf = float(conf[in_class].mean())
            wrong = in_class & (pred != gold)
            if wrong.any():
                mean_conf_wrong = float(conf[wrong].mean())
        stats.append(ClassStats(
            code=c,
            name=names[c] if names else str(c),
            count=n,
            accuracy=accuracy,
            mean_confidence=mean_conf,
            mean_confidence_misclassified=mean_conf_wrong,
        ))
    return stats


# ---------------------------
# Annotator agreement
# ---------------------------

@dataclass(frozen=True)
class StratumStats:
    name: str
    count: int
    majority_vote_agreement: float | None
    any_annotator_agreement: float | None
    clarity_accuracy: float | None

    def to_dict(self) -> dict:
        return {
            "stratum": self.name,
            "n": self.count,
            "majority_vote_agreement": self.majority_vote_agreement,
            "any_annotator_agreement": self.any_annotator_agreement,
            "clarity_accuracy": self.clarity_accuracy,
        }


def _strict_majority(codes: Sequence[int]) -> int | None:
    values, counts = np.unique(np.asarray(codes, dtype=np.int64), return_counts=True)
    top = counts.max()
    if (counts == top).sum() > 1:
        return None
    return int(values[counts.argmax()])


def _stratum_name(codes: Sequence[int]) -> str:
    if len(codes) != 3:
        return "other"
    distinct = len(set(codes))
    if distinct == 1:
        return "unanimous"
    if distinct == 2:
        return "2-1"
    return "1-1-1"


def agreement_strata(instances: Sequence[Instance],
                     predictions: Mapping[str, tuple[int, int]]) -> list[StratumStats]:
    """Accuracy by evasion-annotation consensus stratum.

    Instances are stratified on their 3-entry evasion annotation lists
    (unanimous, 2-1 split, 1-1-1); lists of any other length land in an
    "other" stratum reported separately. Per stratum: the evasion
    majority-vote agreement rate (no strict majority counts as a miss), the
    evasion any-annotator agreement rate, and clarity accuracy under the
    any-annotator rule.
    """
    buckets: dict[str, dict[str, list[float]]] = {}
    for inst in instances:
        if inst.evasion_annotations is None:
            raise DataError(
                f"instance {inst.id!r} has no evasion annotations; agreement strata "
                "need an annotated split"
            )
        if inst.id not in predictions:
            raise DataError(f"no prediction for instance {inst.id!r}")
        pred_c, pred_e = predictions[inst.id]
        codes = [int(a) for a in inst.evasion_annotations]
        stratum = buckets.setdefault(
            _stratum_name(codes), {"majority": [], "any": [], "clarity": []}
        )
        majority = _strict_majority(codes)
        stratum["majority"].append(1.0 if majority is not None and pred_e == majority else 0.0)
        stratum["any"].append(1.0 if int(pred_e) in codes else 0.0)
        if inst.clarity_annotations:
            clarity_ok = int(pred_c) in [int(a) for a in inst.clarity_annotations]
        elif inst.clarity is not None:
            clarity_ok = int(pred_c) == int(inst.clarity)
        else:
            raise DataError(f"instance {inst.id!r} has no clarity gold information")
        stratum["clarity"].append(1.0 if clarity_ok else 0.0)

    out = []
    for name in ("unanimous", "2-1", "1-1-1", "other"):
        if name not in buckets:
            continue
        b = buckets[name]
        n = len(b["any"])
        out.append(StratumStats(
            name=name,
            count=n,
            majority_vote_agreement=float(np.mean(b["majority"])),
            any_annotator_agreement=float(np.mean(b["any"])),
            clarity_accuracy=float(np.mean(b["clarity"])),
        ))
    return out


def fleiss_kappa(annotation_lists: Sequence[Sequence[int]], num_categories: int) -> float:
    """Chance-corrected multi-rater agreement over an item-category count
    matrix. Every item must have the same number of raters (>= 2). Raises
    ValueError when expected agreement is 1 (all mass in one category), where
    kappa is undefined.
    """
    if not annotation_lists:
        raise ValueError("need at least one item")
    n_raters = len(annotation_lists[0])
    if n_raters < 2:
        raise ValueError(f"need >= 2 raters per item, got {n_raters}")
    counts = np.zeros((len(annotation_lists), num_categories), dtype=np.float64)
    for i, ratings in enumerate(annotation_lists):
        if len(ratings) != n_raters:
            raise ValueError(
                f"item {i} has {len(ratings)} ratings, expected {n_raters}"
            )
        for r in ratings:
            code = int(r)
            if not 0 <= code < num_categories:
                raise ValueError(f"rating {code} outside 0..{num_categories - 1}")
            counts[i, code] += 1

    n_items = counts.shape[0]
    p_i = ((counts * counts).sum(axis=1) - n_raters) / (n_raters * (n_raters - 1))
    p_bar = p_i.mean()
    p_j = counts.sum(axis=0) / (n_items * n_raters)
    p_e = float((p_j * p_j).sum())
    if 1.0 - p_e == 0.0:
        raise ValueError("kappa undefined: all ratings fall in a single category")
    return float((p_bar - p_e) / (1.0 - p_e))


# ---------------------------
# Report assembly
# ---------------------------

@dataclass
class EvalReport:
    clarity_macro_f1: float
    evasion_macro_f1: float
    combined_f1: float
    clarity_accuracy: float
    evasion_accuracy: float
    clarity_per_class: list[ClassStats]
    evasion_per_class: list[ClassStats]
    clarity_confusion: ConfusionMatrix
    evasion_confusion: ConfusionMatrix
    scored_instances: int
    annotated: bool
    strata: list[StratumStats] | None = None
    clarity_kappa: float | None = None
    evasion_kappa: float | None = None
    convention: str = MACRO_F1_CONVENTION

    def to_dict(self) -> dict:
        clarity_norm, clarity_empty = self.clarity_confusion.row_normalized()
        evasion_norm, evasion_empty = self.evasion_confusion.row_normalized()
        return {
            "scored_instances": self.scored_instances,
            "annotated_gold": self.annotated,
            "clarity_macro_f1": self.clarity_macro_f1,
            "evasion_macro_f1": self.evasion_macro_f1,
            "combined_f1": self.combined_f1,
            "clarity_accuracy": self.clarity_accuracy,
            "evasion_accuracy": self.evasion_accuracy,
            "clarity_per_class": [s.to_dict() for s in self.clarity_per_class],
            "evasion_per_class": [s.to_dict() for s in self.evasion_per_class],
            "clarity_confusion": self.clarity_confusion.counts.tolist(),
            "evasion_confusion": self.evasion_confusion.counts.tolist(),
            "clarity_confusion_row_normalized": clarity_norm.tolist(),
            "evasion_confusion_row_normalized": evasion_norm.tolist(),
            "clarity_confusion_empty_rows": clarity_empty,
            "evasion_confusion_empty_rows": evasion_empty,
            "agreement_strata": None if self.strata is None
            else [s.to_dict() for s in self.strata],
            "clarity_fleiss_kappa": self.clarity_kappa,
            "evasion_fleiss_kappa": self.evasion_kappa,
            "convention": self.convention,
        }


def _max_prob(row: dict, key: str) -> float | None:
    probs = row.get(key)
    if probs is None:
        return None
    return float(max(probs))


def evaluate_predictions(instances: Sequence[Instance], pred_rows: Sequence[dict]) -> EvalReport:
    """Score a prediction file against gold instances.

    Annotated gold uses the any-annotator rule for accuracy; effective gold
    labels (prediction when correct, annotation majority otherwise) feed the
    F1 and confusion computations. Single-label gold is scored exactly.
    """
    rows = {}
    for row in pred_rows:
        if "id" not in row:
            raise DataError("prediction row missing 'id'")
        rows[row["id"]] = row
    missing = [inst.id for inst in instances if inst.id not in rows]
    if missing:
        raise DataError(
            f"predictions missing for {len(missing)} instance(s), e.g. {missing[:3]}"
        )

    gold_c, gold_e, pred_c, pred_e = [], [], [], []
    conf_c, conf_e = [], []
    correct_c = correct_e = 0
    have_probs = True
    annotated = any(inst.clarity_annotations or inst.evasion_annotations
                    for inst in instances)
    predictions_by_id: dict[str, tuple[int, int]] = {}

    for inst in instances:
        row = rows[inst.id]
        try:
            pc = int(ClarityLabel.from_name(str(row["clarity"])))
            pe = int(EvasionLabel.from_name(str(row["evasion"])))
        except KeyError as exc:
            raise DataError(f"prediction for {inst.id!r} missing field {exc}") from None
        predictions_by_id[inst.id] = (pc, pe)

        if inst.clarity_annotations:
            ok_c, eff_c = resolve_any_annotator(pc, inst.clarity_annotations)
        else:
            if inst.clarity is None:
                raise DataError(f"instance {inst.id!r} has no clarity gold")
            eff_c = int(inst.clarity)
            ok_c = pc == eff_c
        if inst.evasion_annotations:
            ok_e, eff_e = resolve_any_annotator(pe, inst.evasion_annotations)
        else:
            if inst.evasion is None:
                raise DataError(f"instance {inst.id!r} has no evasion gold")
            eff_e = int(inst.evasion)
            ok_e = pe == eff_e

        gold_c.append(eff_c)
        gold_e.append(eff_e)
        pred_c.append(pc)
        pred_e.append(pe)
        correct_c += ok_c
        correct_e += ok_e
        c_conf = _max_prob(row, "clarity_probs")
        e_conf = _max_prob(row, "evasion_probs")
        if c_conf is None or e_conf is None:
            have_probs = False
        conf_c.append(c_conf)
        conf_e.append(e_conf)

    n = len(instances)
    if n == 0:
        raise DataError("no instances to score")
    f1_c = macro_f1(gold_c, pred_c, NUM_CLARITY_CLASSES)
    f1_e = macro_f1(gold_e, pred_e, NUM_EVASION_CLASSES)

    clarity_names = {int(l): l.display_name for l in ClarityLabel}
    evasion_names = {int(l): l.display_name for l in EvasionLabel}

    report = EvalReport(
        clarity_macro_f1=f1_c,
        evasion_macro_f1=f1_e,
        combined_f1=combined_f1(f1_c, f1_e),
        clarity_accuracy=correct_c / n,
        evasion_accuracy=correct_e / n,
        clarity_per_class=per_class_stats(
            gold_c, pred_c, conf_c if have_probs else None,
            NUM_CLARITY_CLASSES, clarity_names,
        ),
        evasion_per_class=per_class_stats(
            gold_e, pred_e, conf_e if have_probs else None,
            NUM_EVASION_CLASSES, evasion_names,
        ),
        clarity_confusion=confusion(gold_c, pred_c, NUM_CLARITY_CLASSES, "clarity"),
        evasion_confusion=confusion(gold_e, pred_e, NUM_EVASION_CLASSES, "evasion"),
        scored_instances=n,
        annotated=annotated,
    )

    if annotated:
        with_evasion_ann = [inst for inst in instances if inst.evasion_annotations]
        if len(with_evasion_ann) == len(instances):
            report.strata = agreement_strata(instances, predictions_by_id)
        report.clarity_kappa = _kappa_or_none(
            [inst.clarity_annotations for inst in instances], NUM_CLARITY_CLASSES
        )
        report.evasion_kappa = _kappa_or_none(
            [inst.evasion_annotations for inst in instances], NUM_EVASION_CLASSES
        )
    return report


def _kappa_or_none(annotation_lists, num_categories: int) -> float | None:
    lists = [list(map(int, a)) for a in annotation_lists if a]
    if not lists:
        return None
    n_raters = len(lists[0])
    if n_raters < 2 or any(len(a) != n_raters for a in lists):
        return None
    try:
        return fleiss_kappa(lists, num_categories)
    except ValueError:
        return None


def dataset_kappas(instances: Sequence[Instance]) -> dict[str, float | None]:
    """Fleiss kappa per taxonomy from an annotated split's label lists alone
    (no predictions involved). None when rater counts are unusable or the
    statistic is degenerate."""
    return {
        "clarity": _kappa_or_none(
            [inst.clarity_annotations for inst in instances], NUM_CLARITY_CLASSES),
        "evasion": _kappa_or_none(
            [inst.evasion_annotations for inst in instances], NUM_EVASION_CLASSES),
    }
