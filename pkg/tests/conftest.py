from __future__ import annotations

import numpy as np

from qaclarity.chunking import ChunkingConfig, chunk
from qaclarity.encoder import ToyEncoder, ToyEncoderParams
from qaclarity.model import DropoutConfig, HeadParams, PoolingStrategy
from qaclarity.pipeline import JointModel, zero_grads
from qaclarity.tokenization import HashTokenizer, tokenize


def build_joint_model(seed: int, d: int = 8, window: int = 16, vocab: int = 32,
                      pooling=PoolingStrategy.MAX, dropout_rate: float = 0.0,
                      dropout_mode: str = "eval") -> JointModel:
    rng = np.random.default_rng(seed)
    encoder = ToyEncoder(ToyEncoderParams.init(vocab, d, window, rng))
    heads = HeadParams.init(d, rng)
    return JointModel(encoder, heads, pooling,
                      DropoutConfig(rate=dropout_rate, mode=dropout_mode))


def random_chunkset(rng: np.random.Generator, vocab: int = 32, window: int = 16,
                    stride: int = 8, min_tokens: int = 5, max_tokens: int = 40):
    tok = HashTokenizer(vocab_size=vocab)
    n = int(rng.integers(min_tokens, max_tokens + 1))
    text = " ".join(f"w{int(rng.integers(0, 200))}" for _ in range(n))
    seq = tokenize(text, tok, "rand")
    return chunk(seq, ChunkingConfig(window=window, stride=stride),
                 pad_id=tok.spec.pad_id)


def finite_difference_grads(model: JointModel, loss_fn, step: float = 1e-5):
    """Central finite differences of loss_fn() w.r.t. every parameter tensor.

    loss_fn must read the model's parameter arrays (mutated in place here) and
    return a scalar.
    """
    out = {}
    for name, p in model.params.items():
        fd = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = p[ix]
            p[ix] = orig + step
            f_plus = loss_fn()
            p[ix] = orig - step
            f_minus = loss_fn()
            p[ix] = orig
            fd[ix] = (f_plus - f_minus) / (2 * step)
        out[name] = fd
    return out


def analytic_grads(model: JointModel, chunks, gold_c: int, gold_e: int, loss_cfg):
    grads = zero_grads(model.params)
    total = model.accumulate_loss_and_grads(chunks, gold_c, gold_e, loss_cfg, None, grads)
    return total, grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / max(na, nb, 1e-12))


def synthetic_settings(window: int = 16, hidden: int = 16, *, folds: int = 3,
                       max_epochs: int = 15, learning_rate: float = 0.02,
                       pooling=PoolingStrategy.MAX, seed: int = 42, **train_overrides):
    """Desk-scale settings for marker-dataset runs: small window, the
    collision-free table tokenizer, and a learning rate sized for the toy
    encoder."""
    from qaclarity.config import PipelineSettings, TrainConfig
    from qaclarity.synthetic import marker_tokenizer_config

    train = TrainConfig(
        learning_rate=learning_rate,
        batch_size=train_overrides.pop("batch_size", 8),
        max_epochs=max_epochs,
        folds=folds,
        base_seed=seed,
        **train_overrides,
    )
    return PipelineSettings(
        tokenizer=marker_tokenizer_config(),
        hidden_width=hidden,
        max_positions=window,
        stride=window // 2,
        pooling=pooling,
        dropout_rate=0.1,
        train=train,
    )


def max_pool_margin(model: JointModel, chunks) -> float:
    """Smallest per-coordinate gap between the largest and second-largest
    chunk value. Finite differences are invalid within the FD step of a
    max-pool argmax switch, so gradient tests require a healthy margin."""
    h = model.encoder.chunk_vectors(chunks)
    if h.shape[0] < 2:
        return np.inf
    ordered = np.sort(h, axis=0)
    return float((ordered[-1] - ordered[-2]).min())
