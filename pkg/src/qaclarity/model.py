"""Response-vector model: pooling over chunk vectors, dropout, two linear
classification heads, and the loss functions with closed-form gradients."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError


class PoolingStrategy(str, Enum):
    MAX = "max"
    MEAN = "mean"
    FIRST_CHUNK = "first_chunk"


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    CLASS_WEIGHTED = "class_weighted"
    FOCAL = "focal"


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.CROSS_ENTROPY
    focal_gamma: float = 2.0
    clarity_weights: tuple[float, ...] | None = None
    evasion_weights: tuple[float, ...] | None = None
    # Single-task ablations disable one head's loss term entirely.
    clarity_enabled: bool = True
    evasion_enabled: bool = True

    def __post_init__(self):
        if self.focal_gamma < 0:
            raise ConfigError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        for name, weights, size in (
            ("clarity_weights", self.clarity_weights, 3),
            ("evasion_weights", self.evasion_weights, 9),
        ):
            if weights is not None:
                if len(weights) != size:
                    raise ConfigError(f"{name} must have {size} entries, got {len(weights)}")
                if any(w <= 0 for w in weights):
                    raise ConfigError(f"{name} must be strictly positive")
        if not (self.clarity_enabled or self.evasion_enabled):
            raise ConfigError("at least one task head must be enabled")


@dataclass(frozen=True)
class DropoutConfig:
    rate: float = 0.1
    mode: str = "train"  # "train" or "eval"; eval is the identity

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.mode not in ("train", "eval"):
            raise ConfigError(f"dropout mode must be 'train' or 'eval', got {self.mode!r}")


@dataclass
class HeadParams:
    clarity_weight: np.ndarray  # (3, d)
    clarity_bias: np.ndarray    # (3,)
    evasion_weight: np.ndarray  # (9, d)
    evasion_bias: np.ndarray    # (9,)

    @classmethod
    def init(cls, hidden_width: int, rng: np.random.Generator) -> "HeadParams":
        u = lambda *shape: rng.uniform(-0.05, 0.05, shape)
        return cls(
            clarity_weight=u(3, hidden_width),
            clarity_bias=u(3),
            evasion_weight=u(9, hidden_width),
            evasion_bias=u(9),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "clarity_weight": self.clarity_weight,
            "clarity_bias": self.clarity_bias,
            "evasion_weight": self.evasion_weight,
            "evasion_bias": self.evasion_bias,
        }

    @classmethod
    def from_dict(cls, arrays: dict[str, np.ndarray]) -> "HeadParams":
        return cls(
            clarity_weight=arrays["clarity_weight"],
            clarity_bias=arrays["clarity_bias"],
            evasion_weight=arrays["evasion_weight"],
            evasion_bias=arrays["evasion_bias"],
        )


# ---------------------------
# Pooling
# ---------------------------

def pool(vectors, strategy: PoolingStrategy) -> np.ndarray:
    v, _ = pool_with_cache(vectors, strategy)
    return v


def pool_with_cache(vectors, strategy: PoolingStrategy):
    """Pool an (M, d) stack of chunk vectors into one d-vector.

    Returns the pooled vector and a cache for the backward pass. Max pooling
    routes gradient to the first maximal chunk per coordinate; mean pooling
    sums in chunk-index order so results are bitwise reproducible.
    """
    h = np.asarray(vectors, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError(f"expected a non-empty (M, d) stack, got shape {h.shape}")
    m = h.shape[0]
    strategy = PoolingStrategy(strategy)
    if strategy is PoolingStrategy.MAX:
        winners = np.argmax(h, axis=0)  # first max wins on ties
        return h[winners, np.arange(h.shape[1])], (strategy, m, winners)
    if strategy is PoolingStrategy.MEAN:
        acc = np.zeros(h.shape[1])
        for k in range(m):
            acc += h[k]
        return acc / m, (strategy, m, None)
    return h[0].copy(), (strategy, m, None)


def pool_backward(cache, d_pooled: np.ndarray) -> np.ndarray:
    strategy, m, winners = cache
    d = d_pooled.shape[0]
    out = np.zeros((m, d))
    if strategy is PoolingStrategy.MAX:
        out[winners, np.arange(d)] = d_pooled
    elif strategy is PoolingStrategy.MEAN:
        out += d_pooled / m
    else:
        out[0] = d_pooled
    return out


# ---------------------------
# Dropout and heads
# ---------------------------

def apply_dropout(v: np.ndarray, cfg: DropoutConfig, rng: np.random.Generator | None):
    """Inverted dropout: zero coordinates with probability `rate`, scale the
    survivors by 1/(1-rate). Returns (output, scale_vector); the scale vector
    is reused by the backward pass and by both heads within one forward."""
    if cfg.mode == "eval" or cfg.rate == 0.0:
        return v, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(v.shape[0]) >= cfg.rate
    scale = keep / (1.0 - cfg.rate)
    return v * scale, scale


def forward(v: np.ndarray, heads: HeadParams, dropout: DropoutConfig,
            rng: np.random.Generator | None = None):
    """Logits for both heads from one pooled vector; a single dropout mask is
    shared by the two heads."""
    dropped, _ = apply_dropout(v, dropout, rng)
    logits_c = heads.clarity_weight @ dropped + heads.clarity_bias
    logits_e = heads.evasion_weight @ dropped + heads.evasion_bias
    return logits_c, logits_e


def probabilities(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max is subtracted before exponentiation)."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def log_probabilities(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


# ---------------------------
# Losses
# ---------------------------

def _head_loss(logits: np.ndarray, gold: int, cfg: LossConfig,
               weights: tuple[float, ...] | None):
    """Loss and d(loss)/d(logits) for one head."""
    log_p = log_probabilities(logits)
    p = np.exp(log_p)
    k = logits.shape[0]
    if not 0 <= gold < k:
        raise ValueError(f"gold label {gold} outside 0..{k - 1}")
    one_hot = np.zeros(k)
    one_hot[gold] = 1.0

    if cfg.kind is LossKind.FOCAL:
        pg = p[gold]
        log_pg = log_p[gold]
        gamma = cfg.focal_gamma
        focus = (1.0 - pg) ** gamma
        loss = -focus * log_pg
        if pg >= 1.0:
            # The loss is exactly zero and flat here; avoid 0 * inf below.
            return 0.0, np.zeros(k)
        # d/dz_j [-(1-pg)^g * log pg] with pg = softmax(z)[gold]
        factor = gamma * pg * (1.0 - pg) ** (gamma - 1.0) * log_pg - focus
        return float(loss), factor * (one_hot - p)

    grad = p - one_hot
    loss = -log_p[gold]
    if cfg.kind is LossKind.CLASS_WEIGHTED:
        if weights is None:
            raise ConfigError("class-weighted loss selected but no weights provided")
        w = float(weights[gold])
        return float(w * loss), w * grad
    return float(loss), grad


def loss(logits_c: np.ndarray, logits_e: np.ndarray, gold_c: int, gold_e: int,
         cfg: LossConfig):
    """Joint loss: the two heads' losses added with equal weighting.

    Returns (total, d/d logits_c, d/d logits_e). A disabled head contributes
    zero loss and zero gradient.
    """
    total = 0.0
    d_c = np.zeros(logits_c.shape[0])
    d_e = np.zeros(logits_e.shape[0])
    if cfg.clarity_enabled:
        l_c, d_c = _head_loss(logits_c, int(gold_c), cfg, cfg.clarity_weights)
        total += l_c
    if cfg.evasion_enabled:
        l_e, d_e = _head_loss(logits_e, int(gold_e), cfg, cfg.evasion_weights)
        total += l_e
    return total, d_c, d_e


def inverse_frequency_weights(counts) -> np.ndarray:
    """w_c = N / (K * n_c); the mean weight is 1 on balanced data."""
    n = np.asarray(counts, dtype=np.float64)
    if (n < 1).any():
        missing = [int(i) for i in np.where(n < 1)[0]]
        raise ValueError(
            f"class count must be >= 1 for inverse-frequency weights; "
            f"zero-count classes {missing} are absent from the training data"
        )
    return n.sum() / (n.shape[0] * n)
