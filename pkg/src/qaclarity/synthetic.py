"""Synthetic datasets for smoke tests, demos, and pipeline verification.

The marker dataset builds instances whose labels are fully determined by one
signal word planted near the END of the answer, past the first chunking
window. A first-chunk-only model therefore sees no label signal at all, while
any pipeline that aggregates over all chunks can learn the mapping.
"""

from __future__ import annotations

import numpy as np

from .dataset import ClarityLabel, EvasionLabel, Instance

_FILLERS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliett kilo lima "
    "mike november oscar papa quebec romeo sierra tango uniform victor whiskey "
    "xray yankee zulu north south east west river stone cloud ember harbor"
).split()

_MARKERS = tuple(
    f"signal{w}" for w in
    ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight")
)

_STRUCTURAL = ("question", "answer", ":")


def marker_tokenizer_config(prepend_start: bool = True) -> dict:
    """Word-table tokenizer covering every word the generator can emit, so
    token ids are collision-free by construction."""
    table: dict[str, int] = {}
    next_id = 10
    for word in _STRUCTURAL + tuple(_FILLERS) + _MARKERS:
        table[word] = next_id
        next_id += 1
    return {"kind": "table", "table": table, "prepend_start": prepend_start}


def marker_token_id(evasion_code: int) -> int:
    table = marker_tokenizer_config()["table"]
    return table[_MARKERS[evasion_code]]


def generate_marker_dataset(count: int, window: int, seed: int,
                            id_prefix: str = "syn",
                            stride: int | None = None) -> list[Instance]:
    """Instances whose evasion label is encoded by a marker word in the final
    chunk of the answer; clarity = evasion mod 3.

    Sequence lengths land in [2.6 * window, 4 * window] tokens, so every
    instance spans at least four chunks under the given stride (default
    window // 2). The marker occupies the final chunk's first token position,
    which lies past 1.5 * window and therefore never inside the first window
    [0, window): a first-chunk-only model is structurally blind to it.
    """
    if window < 8:
        raise ValueError(f"window must be >= 8 for the marker geometry, got {window}")
    from .chunking import ChunkingConfig, expected_chunk_count

    stride = window // 2 if stride is None else stride
    cfg = ChunkingConfig(window=window, stride=stride)
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(count):
        evasion = i % len(_MARKERS)
        clarity = evasion % 3

        total = int(rng.integers(int(2.6 * window) + 1, 4 * window + 1))
        q_len = int(rng.integers(3, 8))
        a_len = total - 5 - q_len  # start token + "question : ... answer :" overhead
        final_chunk_start = (expected_chunk_count(total, cfg) - 1) * stride
        marker_at = final_chunk_start - 5 - q_len
        assert 0 <= marker_at < a_len

        question_words = list(rng.choice(_FILLERS, size=q_len))
        answer_words = list(rng.choice(_FILLERS, size=a_len))
        answer_words[marker_at] = _MARKERS[evasion]

        instances.append(Instance(
            id=f"{id_prefix}-{i:04d}",
            question=" ".join(question_words),
            answer=" ".join(answer_words),
            clarity=ClarityLabel(clarity),
            evasion=EvasionLabel(evasion),
        ))
    return instances


def annotate_instances(instances, seed: int, unanimous: float = 0.6,
                       split_2_1: float = 0.3) -> list[Instance]:
    """Turn single-label instances into annotated ones with 3 raters.

    Each taxonomy independently draws a consensus pattern: all three raters
    agree on the true label, a 2-1 split keeps two of them on it, and the
    remainder produces three pairwise-distinct labels that still include the
    truth (so the any-annotator rule keeps a perfect model perfect).
    """
    if not 0.0 <= unanimous + split_2_1 <= 1.0:
        raise ValueError("pattern probabilities must sum to at most 1")
    rng = np.random.default_rng(seed)

    def annotations(truth: int, num_classes: int) -> tuple[int, ...]:
        others = [c for c in range(num_classes) if c != truth]
        r = rng.random()
        if r < unanimous:
            labels = [truth, truth, truth]
        elif r < unanimous + split_2_1:
            labels = [truth, truth, int(rng.choice(others))]
        else:
            picked = rng.choice(others, size=2, replace=False)
            labels = [truth, int(picked[0]), int(picked[1])]
        rng.shuffle(labels)
        return tuple(labels)

    out = []
    for inst in instances:
        clarity = int(inst.effective_clarity())
        evasion = int(inst.effective_evasion())
        out.append(Instance(
            id=inst.id,
            question=inst.question,
            answer=inst.answer,
            clarity_annotations=tuple(
                ClarityLabel(c) for c in annotations(clarity, len(ClarityLabel))
            ),
            evasion_annotations=tuple(
                EvasionLabel(c) for c in annotations(evasion, len(EvasionLabel))
            ),
        ))
    return out
