from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qaclarity.chunking import (
    ChunkingConfig,
    chunk,
    chunk_spans,
    expected_chunk_count,
)
from qaclarity.errors import ConfigError
from qaclarity.tokenization import TokenSequence


def _seq(length: int) -> TokenSequence:
    return TokenSequence(instance_id="t", ids=tuple(range(10, 10 + length)))


def test_config_validation():
    with pytest.raises(ConfigError):
        ChunkingConfig(window=8, stride=0)
    with pytest.raises(ConfigError):
        ChunkingConfig(window=8, stride=9)
    ChunkingConfig(window=8, stride=8)  # stride == window is allowed


def test_expected_count_examples():
    cfg = ChunkingConfig(window=512, stride=256)
    assert expected_chunk_count(512, cfg) == 1
    assert expected_chunk_count(513, cfg) == 2
    assert expected_chunk_count(1100, cfg) == 4
    assert expected_chunk_count(1, cfg) == 1


@given(st.integers(min_value=1, max_value=5000))
def test_loop_count_matches_formula(length):
    for window, stride in ((8, 4), (512, 256), (16, 16)):
        cfg = ChunkingConfig(window=window, stride=stride)
        assert len(chunk_spans(length, cfg)) == expected_chunk_count(length, cfg)


def test_single_short_chunk_padding_and_mask():
    cfg = ChunkingConfig(window=512, stride=256)
    cs = chunk(_seq(10), cfg, pad_id=0)
    assert len(cs.chunks) == 1
    c = cs.chunks[0]
    assert c.ids.shape == (512,)
    assert c.mask.shape == (512,)
    assert c.mask.sum() == 10
    assert list(c.mask[:10]) == [1] * 10
    assert (c.ids[10:] == 0).all()
    assert list(c.ids[:10]) == list(range(10, 20))


def test_two_chunk_contents_traced_by_hand():
    cfg = ChunkingConfig(window=512, stride=256)
    cs = chunk(_seq(700), cfg, pad_id=0)
    assert len(cs.chunks) == 2
    first, second = cs.chunks
    assert list(first.ids) == list(range(10, 522))        # tokens [0, 512)
    assert first.real_length == 512
    assert list(second.ids[:444]) == list(range(266, 710))  # tokens [256, 700)
    assert second.real_length == 444
    assert (second.ids[444:] == 0).all()


def _coverage_counts(length, cfg):
    counts = np.zeros(length, dtype=int)
    for start, end in chunk_spans(length, cfg):
        counts[start:end] += 1
    return counts


@settings(max_examples=60)
@given(st.integers(min_value=1, max_value=3000))
def test_every_token_covered_and_overlap_structure(length):
    for window, stride in ((8, 4), (512, 256)):
        cfg = ChunkingConfig(window=window, stride=stride)
        counts = _coverage_counts(length, cfg)
        assert (counts >= 1).all()
        spans = chunk_spans(length, cfg)
        assert spans[-1][1] == length  # final chunk ends exactly at |T|
        m = len(spans)
        if m >= 2:
            # With 50% overlap every token outside chunk 0's unique prefix
            # and the final chunk's unique tail sits in >= 2 windows.
            tail_start = spans[-2][1]
            middle = counts[stride:tail_start]
            assert (middle >= 2).all()


def test_mask_sums_bounded():
    rng = np.random.default_rng(0)
    cfg = ChunkingConfig(window=16, stride=8)
    for _ in range(50):
        length = int(rng.integers(1, 200))
        cs = chunk(_seq(length), cfg, pad_id=0)
        total = sum(c.real_length for c in cs.chunks)
        assert total >= length
        assert total <= len(cs.chunks) * cfg.window


def test_reconstruction_when_overflow_divides_stride():
    # |T| > L and (|T| - L) a multiple of S: chunk 0 plus each later chunk's
    # last L - S real tokens rebuild the sequence (S = L/2 geometry).
    cfg = ChunkingConfig(window=8, stride=4)
    for length in (12, 16, 28, 40):
        assert (length - cfg.window) % cfg.stride == 0
        cs = chunk(_seq(length), cfg, pad_id=0)
        rebuilt = list(cs.chunks[0].ids[: cs.chunks[0].real_length])
        for c in cs.chunks[1:]:
            real = list(c.ids[: c.real_length])
            rebuilt.extend(real[-(cfg.window - cfg.stride):])
        assert rebuilt == list(_seq(length).ids)


def test_chunk_starts_at_multiples_of_stride():
    cfg = ChunkingConfig(window=16, stride=8)
    cs = chunk(_seq(61), cfg, pad_id=0)
    spans = chunk_spans(61, cfg)
    for k, (c, (start, end)) in enumerate(zip(cs.chunks, spans)):
        assert c.index == k
        assert start == k * cfg.stride
        assert list(c.ids[: end - start]) == list(range(10 + start, 10 + end))


def test_rejects_zero_length():
    cfg = ChunkingConfig(window=8, stride=4)
    with pytest.raises(ValueError):
        expected_chunk_count(0, cfg)
    with pytest.raises(ValueError):
        chunk_spans(0, cfg)
