"""Question-answer dataset handling: label taxonomies, JSONL loading, split summaries.

Two taxonomies are fixed: a 3-way clarity label and a 9-way evasion-strategy
label. Training records carry one gold label per taxonomy; annotated records
(dev/test style) carry a list of per-annotator labels instead, optionally plus
an adjudicated single label.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Sequence

from .errors import DataError


class ClarityLabel(IntEnum):
    """Coarse response clarity."""

    CLEAR_REPLY = 0
    CLEAR_NON_REPLY = 1
    AMBIVALENT = 2

    @property
    def display_name(self) -> str:
        return _CLARITY_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "ClarityLabel":
        try:
            return _CLARITY_BY_NAME[name.strip()]
        except KeyError:
            raise DataError(f"unknown clarity label {name!r}") from None


class EvasionLabel(IntEnum):
    """Fine-grained evasion strategy."""

    EXPLICIT = 0
    DODGING = 1
    IMPLICIT = 2
    GENERAL = 3
    DEFLECTION = 4
    PARTIAL_HALF_ANSWER = 5
    CLARIFICATION = 6
    CLAIMS_IGNORANCE = 7
    DECLINING_TO_ANSWER = 8

    @property
    def display_name(self) -> str:
        return _EVASION_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "EvasionLabel":
        try:
            return _EVASION_BY_NAME[name.strip()]
        except KeyError:
            raise DataError(f"unknown evasion label {name!r}") from None


_CLARITY_NAMES = {
    ClarityLabel.CLEAR_REPLY: "Clear Reply",
    ClarityLabel.CLEAR_NON_REPLY: "Clear Non-Reply",
    ClarityLabel.AMBIVALENT: "Ambivalent",
}
_CLARITY_BY_NAME = {name: label for label, name in _CLARITY_NAMES.items()}

_EVASION_NAMES = {
    EvasionLabel.EXPLICIT: "Explicit",
    EvasionLabel.DODGING: "Dodging",
    EvasionLabel.IMPLICIT: "Implicit",
    EvasionLabel.GENERAL: "General",
    EvasionLabel.DEFLECTION: "Deflection",
    EvasionLabel.PARTIAL_HALF_ANSWER: "Partial/half-answer",
    EvasionLabel.CLARIFICATION: "Clarification",
    EvasionLabel.CLAIMS_IGNORANCE: "Claims ignorance",
    EvasionLabel.DECLINING_TO_ANSWER: "Declining to answer",
}
_EVASION_BY_NAME = {name: label for label, name in _EVASION_NAMES.items()}

NUM_CLARITY_CLASSES = len(ClarityLabel)
NUM_EVASION_CLASSES = len(EvasionLabel)


def majority_code(codes: Sequence[int]) -> int:
    """Most frequent code; ties resolved toward the lowest code."""
    if not codes:
        raise ValueError("majority of an empty label list is undefined")
    counts = Counter(int(c) for c in codes)
    top = max(counts.values())
    return min(code for code, n in counts.items() if n == top)


@dataclass(frozen=True)
class Instance:
    """One question-answer pair with its gold labels.

    Training instances set `clarity`/`evasion`; annotated instances set the
    annotation tuples (and may additionally carry adjudicated single labels,
    which scoring ignores in favour of the lists).
    """

    id: str
    question: str
    answer: str
    clarity: ClarityLabel | None = None
    evasion: EvasionLabel | None = None
    clarity_annotations: tuple[ClarityLabel, ...] | None = None
    evasion_annotations: tuple[EvasionLabel, ...] | None = None

    def effective_clarity(self) -> ClarityLabel:
        """Single clarity label: the gold one, else the annotation majority."""
        if self.clarity is not None:
            return self.clarity
        if self.clarity_annotations:
            return ClarityLabel(majority_code(self.clarity_annotations))
        raise DataError(f"instance {self.id!r} has no clarity information")

    def effective_evasion(self) -> EvasionLabel:
        if self.evasion is not None:
            return self.evasion
        if self.evasion_annotations:
            return EvasionLabel(majority_code(self.evasion_annotations))
        raise DataError(f"instance {self.id!r} has no evasion information")


def _require_text(record: dict, key: str) -> str:
    value = record.get(key)
    if not isinstance(value, str) or value == "":
        raise DataError(f"field {key!r} must be a non-empty string")
    return value


def _parse_label_list(values, parse, field_name: str):
    if not isinstance(values, list) or len(values) == 0:
        raise DataError(f"field {field_name!r} must be a non-empty list")
    out = []
    for item in values:
        if not isinstance(item, str):
            raise DataError(f"field {field_name!r} contains a non-string entry: {item!r}")
        out.append(parse(item))
    return tuple(out)


def _parse_record(record: dict, split_kind: str) -> Instance:
    if not isinstance(record, dict):
        raise DataError(f"record must be a JSON object, got {type(record).__name__}")
    inst_id = _require_text(record, "id")
    question = _require_text(record, "question")
    answer = _require_text(record, "answer")

    clarity = evasion = None
    clarity_ann = evasion_ann = None
    if split_kind == "train":
        clarity = ClarityLabel.from_name(_require_text(record, "clarity"))
        evasion = EvasionLabel.from_name(_require_text(record, "evasion"))
    else:
        clarity_ann = _parse_label_list(
            record.get("clarity_annotations"), ClarityLabel.from_name, "clarity_annotations"
        )
        evasion_ann = _parse_label_list(
            record.get("evasion_annotations"), EvasionLabel.from_name, "evasion_annotations"
        )
        # Adjudicated single labels are stored when present; scoring uses the lists.
        if isinstance(record.get("clarity"), str):
            clarity = ClarityLabel.from_name(record["clarity"])
        if isinstance(record.get("evasion"), str):
            evasion = EvasionLabel.from_name(record["evasion"])

    return Instance(
        id=inst_id,
        question=question,
        answer=answer,
        clarity=clarity,
        evasion=evasion,
        clarity_annotations=clarity_ann,
        evasion_annotations=evasion_ann,
    )


def load_dataset(path, split_kind: str) -> list[Instance]:
    """Load a line-delimited JSON dataset file.

    `split_kind` is "train" (single gold labels required) or "annotated"
    (non-empty annotation lists required). Blank lines are skipped; any other
    malformed line raises DataError with its line number. Duplicate ids are
    rejected because ids key predictions to gold at evaluation time.
    """
    if split_kind not in ("train", "annotated"):
        raise ValueError(f"split_kind must be 'train' or 'annotated', got {split_kind!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")

    instances: list[Instance] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON: {exc.msg}", path=path, line=lineno) from None
            try:
                inst = _parse_record(record, split_kind)
            except DataError as exc:
                raise DataError(str(exc), path=path, line=lineno) from None
            if inst.id in seen:
                raise DataError(
                    f"duplicate id {inst.id!r} (first seen on line {seen[inst.id]})",
                    path=path,
                    line=lineno,
                )
            seen[inst.id] = lineno
            instances.append(inst)
    return instances


def load_unlabeled(path) -> list[Instance]:
    """Load prediction input: only id/question/answer are required; any label
    fields present are ignored."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    instances: list[Instance] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON: {exc.msg}", path=path, line=lineno) from None
            try:
                inst = Instance(
                    id=_require_text(record, "id"),
                    question=_require_text(record, "question"),
                    answer=_require_text(record, "answer"),
                )
            except DataError as exc:
                raise DataError(str(exc), path=path, line=lineno) from None
            if inst.id in seen:
                raise DataError(
                    f"duplicate id {inst.id!r} (first seen on line {seen[inst.id]})",
                    path=path,
                    line=lineno,
                )
            seen[inst.id] = lineno
            instances.append(inst)
    return instances


def instance_to_record(inst: Instance) -> dict:
    record: dict = {"id": inst.id, "question": inst.question, "answer": inst.answer}
    if inst.clarity is not None:
        record["clarity"] = inst.clarity.display_name
    if inst.evasion is not None:
        record["evasion"] = inst.evasion.display_name
    if inst.clarity_annotations is not None:
        record["clarity_annotations"] = [a.display_name for a in inst.clarity_annotations]
    if inst.evasion_annotations is not None:
        record["evasion_annotations"] = [a.display_name for a in inst.evasion_annotations]
    return record


def save_dataset(instances: Sequence[Instance], path) -> None:
    """Write instances as UTF-8 line-delimited JSON with LF endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class DatasetSummary:
    split: str
    count: int
    clarity_counts: dict[str, int]
    clarity_fractions: dict[str, float]
    evasion_counts: dict[str, int]
    evasion_fractions: dict[str, float]
    token_histogram: list[tuple[int, int, int]]  # (lo, hi_exclusive, count)
    token_budget: int
    over_budget_fraction: float

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "count": self.count,
            "clarity_counts": self.clarity_counts,
            "clarity_fractions": self.clarity_fractions,
            "evasion_counts": self.evasion_counts,
            "evasion_fractions": self.evasion_fractions,
            "token_histogram": [list(b) for b in self.token_histogram],
            "token_budget": self.token_budget,
            "over_budget_fraction": self.over_budget_fraction,
        }


def summarize(
    instances: Sequence[Instance],
    tokenizer,
    token_budget: int,
    split: str = "",
    bin_width: int = 128,
) -> DatasetSummary:
    """Summarize a split: class balance, token-length histogram, budget overflow.

    Lengths are measured on the formatted question-answer sequence with the
    given tokenizer. The over-budget fraction counts instances whose token
    count strictly exceeds `token_budget`.
    """
    from .tokenization import format_input, tokenize

    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")

    lengths = []
    clarity_counter: Counter = Counter()
    evasion_counter: Counter = Counter()
    for inst in instances:
        seq = tokenize(format_input(inst.question, inst.answer), tokenizer, inst.id)
        lengths.append(len(seq.ids))
        clarity_counter[inst.effective_clarity()] += 1
        evasion_counter[inst.effective_evasion()] += 1

    total = len(instances)
    clarity_counts = {lab.display_name: clarity_counter.get(lab, 0) for lab in ClarityLabel}
    evasion_counts = {lab.display_name: evasion_counter.get(lab, 0) for lab in EvasionLabel}
    clarity_fracs = {k: (v / total if total else 0.0) for k, v in clarity_counts.items()}
    evasion_fracs = {k: (v / total if total else 0.0) for k, v in evasion_counts.items()}

    histogram: list[tuple[int, int, int]] = []
    if lengths:
        max_len = max(lengths)
        n_bins = max_len // bin_width + 1
        bin_counts = [0] * n_bins
        for n in lengths:
            bin_counts[n // bin_width] += 1
        histogram = [
            (i * bin_width, (i + 1) * bin_width, bin_counts[i]) for i in range(n_bins)
        ]

    over = sum(1 for n in lengths if n > token_budget)
    return DatasetSummary(
        split=split,
        count=total,
        clarity_counts=clarity_counts,
        clarity_fractions=clarity_fracs,
        evasion_counts=evasion_counts,
        evasion_fractions=evasion_fracs,
        token_histogram=histogram,
        token_budget=token_budget,
        over_budget_fraction=over / total if total else 0.0,
    )
