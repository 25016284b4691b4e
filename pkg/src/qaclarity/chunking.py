"""Sliding-window segmentation of token sequences into fixed-length chunks.

Windows of length L are taken at starts 0, S, 2S, ... until a window reaches
the end of the sequence; the final window always extends to the last token and
is padded back up to L. With S <= L the windows cover every token index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tokenization import TokenSequence


@dataclass(frozen=True)
class ChunkingConfig:
    window: int = 512  # fixed by the encoder's positional capacity
    stride: int = 256

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if not 1 <= self.stride <= self.window:
            raise ConfigError(
                f"stride must satisfy 1 <= stride <= window, got stride={self.stride}, "
                f"window={self.window}"
            )


@dataclass(frozen=True)
class Chunk:
    """One fixed-length window: padded ids plus a prefix-of-ones mask."""

    index: int
    ids: np.ndarray   # shape (L,), int64
    mask: np.ndarray  # shape (L,), int64, 1 = real token

    @property
    def real_length(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class ChunkSet:
    instance_id: str
    chunks: tuple[Chunk, ...]
    token_count: int


def expected_chunk_count(length: int, cfg: ChunkingConfig) -> int:
    """Closed-form window count: ceil(max(length - L, 0) / S) + 1."""
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    overflow = max(length - cfg.window, 0)
    return (overflow + cfg.stride - 1) // cfg.stride + 1


def chunk_spans(length: int, cfg: ChunkingConfig) -> list[tuple[int, int]]:
    """(start, end) spans of real tokens per chunk, by the window loop.

    This is the normative construction; expected_chunk_count must agree with
    its length for every valid input.
    """
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    spans: list[tuple[int, int]] = []
    start = 0
    while start < length:
        end = min(start + cfg.window, length)
        spans.append((start, end))
        if end >= length:
            break
        start += cfg.stride
    return spans


def chunk(seq: TokenSequence, cfg: ChunkingConfig, pad_id: int = 0) -> ChunkSet:
    """Segment a token sequence into overlapping windows padded to length L."""
    ids = np.asarray(seq.ids, dtype=np.int64)
    length = ids.shape[0]
    chunks = []
    for k, (start, end) in enumerate(chunk_spans(length, cfg)):
        window = np.full(cfg.window, pad_id, dtype=np.int64)
        window[: end - start] = ids[start:end]
        mask = np.zeros(cfg.window, dtype=np.int64)
        mask[: end - start] = 1
        chunks.append(Chunk(index=k, ids=window, mask=mask))
    return ChunkSet(instance_id=seq.instance_id, chunks=tuple(chunks), token_count=length)
