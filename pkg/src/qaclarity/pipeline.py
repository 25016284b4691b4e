"""Glue: tokenize -> chunk -> encode -> pool -> heads, forward and backward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chunking import ChunkingConfig, ChunkSet, chunk
from .dataset import Instance
from .encoder import ToyEncoder
from .model import (
    DropoutConfig,
    HeadParams,
    LossConfig,
    PoolingStrategy,
    apply_dropout,
    loss,
    pool_backward,
    pool_with_cache,
    probabilities,
)
from .tokenization import Tokenizer, format_input, tokenize


@dataclass(frozen=True)
class Preprocessor:
    """Instance -> ChunkSet, with the tokenizer's pad id used for padding."""

    tokenizer: Tokenizer
    chunking: ChunkingConfig

    def prepare(self, instance: Instance) -> ChunkSet:
        seq = tokenize(format_input(instance.question, instance.answer),
                       self.tokenizer, instance.id)
        return chunk(seq, self.chunking, pad_id=self.tokenizer.spec.pad_id)


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.items()}


class JointModel:
    """Shared encoder feeding one pooled response vector into two heads.

    Parameter arrays are shared with the optimizer by identity: the `params`
    dict holds the same ndarrays the encoder and heads use, so in-place
    optimizer updates are visible immediately.
    """

    def __init__(self, encoder: ToyEncoder, heads: HeadParams,
                 pooling: PoolingStrategy, dropout: DropoutConfig):
        self.encoder = encoder
        self.heads = heads
        self.pooling = PoolingStrategy(pooling)
        self.dropout = dropout
        self.params: dict[str, np.ndarray] = {
            **encoder.params.as_dict(),
            **heads.as_dict(),
        }

    def predict_probs(self, chunks: ChunkSet) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode class probabilities (no dropout) for both heads."""
        h = self.encoder.chunk_vectors(chunks)
        v, _ = pool_with_cache(h, self.pooling)
        logits_c = self.heads.clarity_weight @ v + self.heads.clarity_bias
        logits_e = self.heads.evasion_weight @ v + self.heads.evasion_bias
        return probabilities(logits_c), probabilities(logits_e)

    def accumulate_loss_and_grads(
        self,
        chunks: ChunkSet,
        gold_clarity: int,
        gold_evasion: int,
        loss_cfg: LossConfig,
        rng: np.random.Generator | None,
        grads: dict[str, np.ndarray],
    ) -> float:
        """One instance's loss; parameter gradients are added into `grads`."""
        vectors = []
        caches = []
        for c in chunks.chunks:
            h, cache = self.encoder.chunk_vector_with_cache(c)
            vectors.append(h)
            caches.append(cache)
        stacked = np.stack(vectors)

        v, pool_cache = pool_with_cache(stacked, self.pooling)
        dropped, drop_scale = apply_dropout(v, self.dropout, rng)
        logits_c = self.heads.clarity_weight @ dropped + self.heads.clarity_bias
        logits_e = self.heads.evasion_weight @ dropped + self.heads.evasion_bias
        total, d_logits_c, d_logits_e = loss(logits_c, logits_e,
                                             gold_clarity, gold_evasion, loss_cfg)

        grads["clarity_weight"] += np.outer(d_logits_c, dropped)
        grads["clarity_bias"] += d_logits_c
        grads["evasion_weight"] += np.outer(d_logits_e, dropped)
        grads["evasion_bias"] += d_logits_e

        d_dropped = self.heads.clarity_weight.T @ d_logits_c \
            + self.heads.evasion_weight.T @ d_logits_e
        d_v = d_dropped if drop_scale is None else d_dropped * drop_scale
        d_vectors = pool_backward(pool_cache, d_v)
        for cache, d_h in zip(caches, d_vectors):
            self.encoder.backward_chunk(cache, d_h, grads)
        return total
