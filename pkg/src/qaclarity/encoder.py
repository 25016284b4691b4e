"""Chunk encoders: the pluggable interface and a trainable toy implementation.

Every encoder maps a chunk to an (L, d) matrix of per-position hidden states;
the pipeline uses the position-0 row as the chunk's summary vector. Padded
positions must not influence that row.

The toy encoder is a deliberately small network with hand-written backward
passes: token embedding + position embedding, a mask-weighted mean of the real
token embeddings injected at position 0, then tanh followed by one linear
mixing layer. No autodiff framework is involved, which keeps the
finite-difference gradient checks meaningful.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .chunking import Chunk, ChunkSet
from .errors import DataError


def extract_position0(hidden: np.ndarray) -> np.ndarray:
    """Row 0 of a hidden-state matrix, as an independent copy."""
    if hidden.ndim != 2 or hidden.shape[0] < 1:
        raise ValueError(f"expected a matrix with at least one row, got shape {hidden.shape}")
    return hidden[0].copy()


class ChunkEncoder(ABC):
    """Interface the pipeline depends on; adapters for real encoders only
    need encode_chunk and the two size attributes."""

    hidden_width: int
    max_positions: int

    @abstractmethod
    def encode_chunk(self, chunk: Chunk) -> np.ndarray:
        """Per-position hidden states, shape (max_positions, hidden_width)."""

    def chunk_vectors(self, chunks: ChunkSet) -> np.ndarray:
        """One summary vector per chunk, in chunk-index order; shape (M, d)."""
        return np.stack([extract_position0(self.encode_chunk(c)) for c in chunks.chunks])


@dataclass
class ToyEncoderParams:
    token_emb: np.ndarray   # (vocab, d)
    pos_emb: np.ndarray     # (L, d)
    mix_weight: np.ndarray  # (d, d)
    mix_bias: np.ndarray    # (d,)

    @classmethod
    def init(cls, vocab_size: int, hidden_width: int, max_positions: int,
             rng: np.random.Generator) -> "ToyEncoderParams":
        """Uniform initialization in [-0.05, 0.05]; draw order is fixed so a
        given generator state yields bitwise-identical parameters."""
        u = lambda *shape: rng.uniform(-0.05, 0.05, shape)
        return cls(
            token_emb=u(vocab_size, hidden_width),
            pos_emb=u(max_positions, hidden_width),
            mix_weight=u(hidden_width, hidden_width),
            mix_bias=u(hidden_width),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "token_emb": self.token_emb,
            "pos_emb": self.pos_emb,
            "mix_weight": self.mix_weight,
            "mix_bias": self.mix_bias,
        }

    @classmethod
    def from_dict(cls, arrays: dict[str, np.ndarray]) -> "ToyEncoderParams":
        return cls(
            token_emb=arrays["token_emb"],
            pos_emb=arrays["pos_emb"],
            mix_weight=arrays["mix_weight"],
            mix_bias=arrays["mix_bias"],
        )

    def copy(self) -> "ToyEncoderParams":
        return ToyEncoderParams(
            token_emb=self.token_emb.copy(),
            pos_emb=self.pos_emb.copy(),
            mix_weight=self.mix_weight.copy(),
            mix_bias=self.mix_bias.copy(),
        )


@dataclass
class _ChunkCache:
    """Forward-pass intermediates needed by the backward pass."""

    first_id: int
    real_ids: np.ndarray
    activation0: np.ndarray  # tanh of the position-0 pre-mix input


class ToyEncoder(ChunkEncoder):
    def __init__(self, params: ToyEncoderParams):
        self.params = params
        self.vocab_size, self.hidden_width = params.token_emb.shape
        self.max_positions = params.pos_emb.shape[0]
        if params.pos_emb.shape[1] != self.hidden_width:
            raise ValueError("position embedding width does not match token embedding width")
        if params.mix_weight.shape != (self.hidden_width, self.hidden_width):
            raise ValueError("mixing weight must be square of the hidden width")
        if params.mix_bias.shape != (self.hidden_width,):
            raise ValueError("mixing bias width does not match hidden width")

    def _check_ids(self, chunk: Chunk):
        if chunk.ids.shape[0] != self.max_positions:
            raise ValueError(
                f"chunk length {chunk.ids.shape[0]} does not match encoder positions "
                f"{self.max_positions}"
            )
        if chunk.ids.min() < 0 or chunk.ids.max() >= self.vocab_size:
            raise DataError(
                f"token id outside vocabulary of size {self.vocab_size} in chunk {chunk.index}"
            )

    def _position0_input(self, chunk: Chunk) -> np.ndarray:
        p = self.params
        n = chunk.real_length
        real_ids = chunk.ids[:n]
        mean_emb = p.token_emb[real_ids].mean(axis=0)
        return (p.token_emb[chunk.ids[0]] + p.pos_emb[0]) + mean_emb

    def encode_chunk(self, chunk: Chunk) -> np.ndarray:
        """Full (L, d) hidden matrix. Masked positions only affect their own
        rows, never the position-0 summary."""
        self._check_ids(chunk)
        p = self.params
        x = p.token_emb[chunk.ids] + p.pos_emb
        x[0] = self._position0_input(chunk)
        return np.tanh(x) @ p.mix_weight + p.mix_bias

    def chunk_vector(self, chunk: Chunk) -> np.ndarray:
        """Position-0 output without materializing the other rows."""
        h, _ = self.chunk_vector_with_cache(chunk)
        return h

    def chunk_vector_with_cache(self, chunk: Chunk) -> tuple[np.ndarray, _ChunkCache]:
        self._check_ids(chunk)
        p = self.params
        n = chunk.real_length
        a0 = np.tanh(self._position0_input(chunk))
        h = a0 @ p.mix_weight + p.mix_bias
        return h, _ChunkCache(
            first_id=int(chunk.ids[0]), real_ids=chunk.ids[:n], activation0=a0
        )

    def chunk_vectors(self, chunks: ChunkSet) -> np.ndarray:
        return np.stack([self.chunk_vector(c) for c in chunks.chunks])

    def backward_chunk(self, cache: _ChunkCache, d_hidden: np.ndarray,
                       grads: dict[str, np.ndarray]) -> None:
        """Accumulate parameter gradients for one chunk's position-0 output."""
        p = self.params
        a0 = cache.activation0
        grads["mix_weight"] += np.outer(a0, d_hidden)
        grads["mix_bias"] += d_hidden
        d_x0 = (p.mix_weight @ d_hidden) * (1.0 - a0 * a0)
        grads["pos_emb"][0] += d_x0
        grads["token_emb"][cache.first_id] += d_x0
        # np.add.at handles repeated token ids within the window.
        np.add.at(grads["token_emb"], cache.real_ids, d_x0 / cache.real_ids.shape[0])
