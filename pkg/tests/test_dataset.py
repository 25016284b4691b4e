from __future__ import annotations

import json

import numpy as np
import pytest

from qaclarity.dataset import (
    ClarityLabel,
    EvasionLabel,
    Instance,
    load_dataset,
    load_unlabeled,
    majority_code,
    save_dataset,
    summarize,
)
from qaclarity.errors import DataError
from qaclarity.tokenization import HashTokenizer, WordTableTokenizer


def test_clarity_label_codes_round_trip():
    assert len(ClarityLabel) == 3
    assert [int(l) for l in ClarityLabel] == [0, 1, 2]
    for label in ClarityLabel:
        assert ClarityLabel.from_name(label.display_name) is label
        assert ClarityLabel(int(label)) is label
    assert ClarityLabel.from_name("  Clear Non-Reply ") is ClarityLabel.CLEAR_NON_REPLY


def test_evasion_label_codes_round_trip():
    assert len(EvasionLabel) == 9
    assert [int(l) for l in EvasionLabel] == list(range(9))
    for label in EvasionLabel:
        assert EvasionLabel.from_name(label.display_name) is label
    assert EvasionLabel.from_name("Partial/half-answer") is EvasionLabel.PARTIAL_HALF_ANSWER
    assert EvasionLabel(0) is EvasionLabel.EXPLICIT
    assert EvasionLabel(8) is EvasionLabel.DECLINING_TO_ANSWER


def test_unknown_label_rejected():
    with pytest.raises(DataError, match="Ambivalentt"):
        ClarityLabel.from_name("Ambivalentt")


def _train_record(i: int, clarity="Ambivalent", evasion="Dodging") -> dict:
    return {"id": f"t{i}", "question": f"why {i}?", "answer": f"because {i}.",
            "clarity": clarity, "evasion": evasion}


def _write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


def test_load_train_split(tmp_path):
    path = tmp_path / "train.jsonl"
    _write_jsonl(path, [_train_record(i) for i in range(5)])
    instances = load_dataset(path, "train")
    assert len(instances) == 5
    assert [i.id for i in instances] == [f"t{i}" for i in range(5)]  # order preserved
    assert instances[0].clarity is ClarityLabel.AMBIVALENT
    assert instances[0].evasion is EvasionLabel.DODGING
    assert instances[0].clarity_annotations is None


def test_load_full_scale_train_file(tmp_path):
    # 3448 records, the size of the real training split
    path = tmp_path / "train_full.jsonl"
    labels = [(c.display_name, e.display_name)
              for c in ClarityLabel for e in EvasionLabel]
    _write_jsonl(path, [
        _train_record(i, *labels[i % len(labels)]) for i in range(3448)
    ])
    assert len(load_dataset(path, "train")) == 3448


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_dataset(path, "train") == []


def test_load_reports_line_number_for_bad_label(tmp_path):
    path = tmp_path / "train.jsonl"
    _write_jsonl(path, [_train_record(0), _train_record(1, clarity="Ambivalentt")])
    with pytest.raises(DataError) as exc:
        load_dataset(path, "train")
    assert "Ambivalentt" in str(exc.value)
    assert ":2:" in str(exc.value)


def test_load_reports_line_number_for_bad_json(tmp_path):
    path = tmp_path / "train.jsonl"
    path.write_text(json.dumps(_train_record(0)) + "\n{oops\n", encoding="utf-8")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(path, "train")


def test_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "train.jsonl"
    _write_jsonl(path, [_train_record(0), _train_record(0)])
    with pytest.raises(DataError, match="duplicate id"):
        load_dataset(path, "train")


def test_empty_annotation_list_rejected(tmp_path):
    path = tmp_path / "dev.jsonl"
    _write_jsonl(path, [{
        "id": "d0", "question": "q", "answer": "a",
        "clarity_annotations": [], "evasion_annotations": ["Dodging"],
    }])
    with pytest.raises(DataError, match="clarity_annotations"):
        load_dataset(path, "annotated")


def test_annotated_split_accepts_any_list_length(tmp_path):
    path = tmp_path / "dev.jsonl"
    _write_jsonl(path, [{
        "id": "d0", "question": "q", "answer": "a",
        "clarity_annotations": ["Clear Reply"],
        "evasion_annotations": ["Dodging", "Explicit", "Dodging", "General"],
    }])
    (inst,) = load_dataset(path, "annotated")
    assert inst.clarity_annotations == (ClarityLabel.CLEAR_REPLY,)
    assert len(inst.evasion_annotations) == 4


def test_adjudicated_label_stored_alongside_annotations(tmp_path):
    path = tmp_path / "dev.jsonl"
    _write_jsonl(path, [{
        "id": "d0", "question": "q", "answer": "a", "clarity": "Ambivalent",
        "clarity_annotations": ["Clear Reply", "Ambivalent", "Ambivalent"],
        "evasion_annotations": ["Dodging", "Dodging", "General"],
    }])
    (inst,) = load_dataset(path, "annotated")
    assert inst.clarity is ClarityLabel.AMBIVALENT
    assert inst.effective_evasion() is EvasionLabel.DODGING


def test_empty_question_rejected(tmp_path):
    path = tmp_path / "train.jsonl"
    _write_jsonl(path, [{"id": "x", "question": "", "answer": "a",
                         "clarity": "Ambivalent", "evasion": "Dodging"}])
    with pytest.raises(DataError, match="question"):
        load_dataset(path, "train")


def test_save_load_round_trip_train(tmp_path):
    rng = np.random.default_rng(7)
    instances = [
        Instance(
            id=f"r{i}",
            question=f"what about {i}?",
            answer="l" + "o" * int(rng.integers(1, 20)) + "ng answer",
            clarity=ClarityLabel(int(rng.integers(0, 3))),
            evasion=EvasionLabel(int(rng.integers(0, 9))),
        )
        for i in range(40)
    ]
    path = tmp_path / "round.jsonl"
    save_dataset(instances, path)
    assert load_dataset(path, "train") == instances


def test_save_load_round_trip_annotated(tmp_path):
    rng = np.random.default_rng(11)
    instances = []
    for i in range(25):
        instances.append(Instance(
            id=f"a{i}", question="q?", answer="a.",
            clarity_annotations=tuple(
                ClarityLabel(int(c)) for c in rng.integers(0, 3, 3)),
            evasion_annotations=tuple(
                EvasionLabel(int(c)) for c in rng.integers(0, 9, 3)),
        ))
    path = tmp_path / "round.jsonl"
    save_dataset(instances, path)
    assert load_dataset(path, "annotated") == instances


def test_load_unlabeled_ignores_labels(tmp_path):
    path = tmp_path / "in.jsonl"
    _write_jsonl(path, [{"id": "u0", "question": "q", "answer": "a",
                         "clarity": "Ambivalent"}])
    (inst,) = load_unlabeled(path)
    assert inst.clarity is None


def test_majority_code_tie_breaks_low():
    assert majority_code([2, 1, 1, 2]) == 1
    assert majority_code([0, 1, 2]) == 0
    assert majority_code([2, 2, 1]) == 2


# ---------------------------
# summarize
# ---------------------------

def _make_instances(clarity_codes, evasion_codes, answers=None):
    out = []
    for i, (c, e) in enumerate(zip(clarity_codes, evasion_codes)):
        out.append(Instance(
            id=f"s{i}", question="q",
            answer=answers[i] if answers else "a",
            clarity=ClarityLabel(c), evasion=EvasionLabel(e),
        ))
    return out


def test_summarize_fractions_match_brute_force():
    rng = np.random.default_rng(3)
    tok = HashTokenizer(vocab_size=64)
    for _ in range(10):
        n = int(rng.integers(1, 60))
        clar = rng.integers(0, 3, n)
        evas = rng.integers(0, 9, n)
        summary = summarize(_make_instances(clar, evas), tok, token_budget=512)
        assert summary.count == n
        assert sum(summary.clarity_counts.values()) == n
        assert sum(summary.evasion_counts.values()) == n
        assert abs(sum(summary.clarity_fractions.values()) - 1.0) < 1e-9
        assert abs(sum(summary.evasion_fractions.values()) - 1.0) < 1e-9
        for label in ClarityLabel:
            expected = int((clar == int(label)).sum()) / n
            assert summary.clarity_fractions[label.display_name] == pytest.approx(expected)
        for label in EvasionLabel:
            expected = int((evas == int(label)).sum()) / n
            assert summary.evasion_fractions[label.display_name] == pytest.approx(expected)


def test_summarize_exceed_fraction_zero_when_all_short():
    tok = HashTokenizer(vocab_size=64)
    summary = summarize(_make_instances([0, 1], [0, 1]), tok, token_budget=512)
    assert summary.over_budget_fraction == 0.0


def test_summarize_exceed_fraction_counts_strictly_longer():
    # Token lengths are controlled exactly with a table tokenizer: one word
    # repeated, plus the 5 fixed tokens (start + "question : answer :").
    tok = WordTableTokenizer({"w": 3, "q": 4, "question": 5, "answer": 6, ":": 7})
    answers = [" ".join(["w"] * (300 - 6)), " ".join(["w"] * (600 - 6))]
    instances = _make_instances([0, 1], [0, 1], answers=answers)
    summary = summarize(instances, tok, token_budget=512)
    lengths = [hi_count for hi_count in summary.token_histogram]
    assert summary.over_budget_fraction == 0.5
    assert summary.count == 2
    assert sum(c for _, _, c in lengths) == 2


def test_summarize_histogram_bins_cover_all_lengths():
    tok = HashTokenizer(vocab_size=64)
    rng = np.random.default_rng(5)
    n = 30
    answers = [" ".join(f"w{j}" for j in range(int(rng.integers(1, 300)))) for _ in range(n)]
    instances = _make_instances(rng.integers(0, 3, n), rng.integers(0, 9, n), answers)
    summary = summarize(instances, tok, token_budget=128, bin_width=64)
    assert sum(c for _, _, c in summary.token_histogram) == n
    for lo, hi, _ in summary.token_histogram:
        assert hi - lo == 64
