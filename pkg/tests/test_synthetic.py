from __future__ import annotations

from collections import Counter

from qaclarity.chunking import ChunkingConfig, chunk
from qaclarity.synthetic import (
    annotate_instances,
    generate_marker_dataset,
    marker_token_id,
    marker_tokenizer_config,
)
from qaclarity.tokenization import UNK_ID, build_tokenizer, format_input, tokenize


def test_marker_tokenizer_has_no_collisions():
    cfg = marker_tokenizer_config()
    ids = list(cfg["table"].values())
    assert len(ids) == len(set(ids))
    assert min(ids) >= 3


def test_marker_never_in_first_window_and_always_in_final_chunk():
    window = 16
    tok = build_tokenizer(marker_tokenizer_config())
    ccfg = ChunkingConfig(window=window, stride=window // 2)
    for inst in generate_marker_dataset(60, window=window, seed=13):
        seq = tokenize(format_input(inst.question, inst.answer), tok, inst.id)
        assert UNK_ID not in seq.ids  # generator words all covered by the table
        marker = marker_token_id(int(inst.evasion))
        positions = [i for i, t in enumerate(seq.ids) if t == marker]
        assert len(positions) == 1
        (pos,) = positions
        assert pos >= window  # invisible to the first chunk
        cs = chunk(seq, ccfg, pad_id=tok.spec.pad_id)
        final = cs.chunks[-1]
        start = final.index * ccfg.stride
        assert start <= pos < start + final.real_length
        assert len(cs.chunks) >= 4
        # no other class's marker appears anywhere
        for other in range(9):
            if other != int(inst.evasion):
                assert marker_token_id(other) not in seq.ids


def test_labels_follow_marker_scheme():
    for inst in generate_marker_dataset(27, window=16, seed=1):
        assert int(inst.clarity) == int(inst.evasion) % 3
    counts = Counter(int(i.evasion) for i in generate_marker_dataset(90, window=16, seed=2))
    assert all(counts[e] == 10 for e in range(9))


def test_generator_deterministic():
    a = generate_marker_dataset(20, window=16, seed=3)
    b = generate_marker_dataset(20, window=16, seed=3)
    assert a == b


def test_annotations_cover_truth_and_requested_patterns():
    base = generate_marker_dataset(200, window=16, seed=4)
    annotated = annotate_instances(base, seed=5, unanimous=0.5, split_2_1=0.3)
    patterns = Counter()
    for orig, ann in zip(base, annotated):
        assert ann.clarity_annotations is not None
        assert len(ann.clarity_annotations) == 3
        assert len(ann.evasion_annotations) == 3
        # truth always among the annotators
        assert orig.clarity in ann.clarity_annotations
        assert orig.evasion in ann.evasion_annotations
        patterns[len(set(ann.evasion_annotations))] += 1
    # all three consensus patterns occur at these probabilities
    assert set(patterns) == {1, 2, 3}


def test_annotated_instances_drop_single_labels():
    base = generate_marker_dataset(5, window=16, seed=6)
    annotated = annotate_instances(base, seed=7)
    assert all(a.clarity is None and a.evasion is None for a in annotated)
    assert all(a.effective_clarity() is not None for a in annotated)
