"""Input formatting and pluggable tokenization.

The classification pipeline only needs stable non-negative token ids, so the
built-in tokenizers are deterministic stand-ins for a real subword tokenizer:
a hash-bucketed open-vocabulary tokenizer and a fixed word-table tokenizer.
A real tokenizer can be plugged in by implementing the same two attributes
(`spec` and `encode`).
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from typing import Mapping, Protocol

from .errors import ConfigError, DataError

PAD_ID = 0
START_ID = 1
UNK_ID = 2

_QUESTION_PREFIX = "Question: "
_ANSWER_PREFIX = "Answer: "

# Words are maximal alphanumeric runs; every other non-space character is its
# own token. Text is lowercased first.
_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def format_input(question: str, answer: str) -> str:
    """Build the single model input string. No truncation is applied."""
    return f"{_QUESTION_PREFIX}{question}\n{_ANSWER_PREFIX}{answer}"


@dataclass(frozen=True)
class TokenizerSpec:
    """Shape of a tokenizer's id space, recorded inside checkpoints."""

    vocab_size: int
    pad_id: int = PAD_ID
    start_id: int = START_ID
    prepend_start: bool = True

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        for name, value in (("pad_id", self.pad_id), ("start_id", self.start_id)):
            if not 0 <= value < self.vocab_size:
                raise ConfigError(f"{name}={value} outside vocabulary of size {self.vocab_size}")


@dataclass(frozen=True)
class TokenSequence:
    """Tokenized formatted input for one instance."""

    instance_id: str
    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


class Tokenizer(Protocol):
    spec: TokenizerSpec

    def encode(self, text: str) -> list[int]: ...


def split_words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashTokenizer:
    """Open-vocabulary tokenizer hashing words into fixed buckets.

    Ids 0..2 are reserved (pad, start, unknown); words map to buckets
    3..vocab_size-1 via CRC32, which is stable across processes and platforms.
    """

    def __init__(self, vocab_size: int = 8192, prepend_start: bool = True):
        if vocab_size < 4:
            raise ConfigError(f"hash tokenizer needs vocab_size >= 4, got {vocab_size}")
        self.spec = TokenizerSpec(vocab_size=vocab_size, prepend_start=prepend_start)
        self._buckets = vocab_size - 3

    def encode(self, text: str) -> list[int]:
        return [3 + zlib.crc32(w.encode("utf-8")) % self._buckets for w in split_words(text)]

    def config(self) -> dict:
        return {
            "kind": "hash",
            "vocab_size": self.spec.vocab_size,
            "prepend_start": self.spec.prepend_start,
        }


class WordTableTokenizer:
    """Closed-vocabulary tokenizer over an explicit word -> id table.

    Unknown words map to the reserved unknown id. Useful for synthetic data
    where exact, collision-free ids matter.
    """

    def __init__(self, table: Mapping[str, int], vocab_size: int | None = None,
                 prepend_start: bool = True):
        if not table:
            raise ConfigError("word table must not be empty")
        for word, idx in table.items():
            if idx < 3:
                raise ConfigError(f"table id for {word!r} collides with a reserved id: {idx}")
        min_vocab = max(table.values()) + 1
        if vocab_size is None:
            vocab_size = min_vocab
        elif vocab_size < min_vocab:
            raise ConfigError(f"vocab_size {vocab_size} smaller than largest table id + 1")
        self.table = dict(table)
        self.spec = TokenizerSpec(vocab_size=vocab_size, prepend_start=prepend_start)

    def encode(self, text: str) -> list[int]:
        return [self.table.get(w, UNK_ID) for w in split_words(text)]

    def config(self) -> dict:
        return {
            "kind": "table",
            "table": self.table,
            "vocab_size": self.spec.vocab_size,
            "prepend_start": self.spec.prepend_start,
        }


def tokenize(text: str, tokenizer: Tokenizer, instance_id: str = "") -> TokenSequence:
    """Map text to a TokenSequence; the start token is prepended at most once,
    to the full sequence (never per window)."""
    ids = tokenizer.encode(text)
    if tokenizer.spec.prepend_start:
        ids = [tokenizer.spec.start_id] + ids
    if not ids:
        raise DataError(f"instance {instance_id!r} tokenized to an empty sequence")
    return TokenSequence(instance_id=instance_id, ids=tuple(ids))


def build_tokenizer(config: Mapping) -> Tokenizer:
    """Construct a tokenizer from its serialized config dict."""
    kind = config.get("kind", "hash")
    prepend = bool(config.get("prepend_start", True))
    if kind == "hash":
        return HashTokenizer(
            vocab_size=int(config.get("vocab_size", 8192)), prepend_start=prepend
        )
    if kind == "table":
        table = config.get("table")
        if not isinstance(table, Mapping):
            raise ConfigError("table tokenizer config needs a 'table' mapping")
        vocab = config.get("vocab_size")
        return WordTableTokenizer(
            {str(k): int(v) for k, v in table.items()},
            vocab_size=None if vocab is None else int(vocab),
            prepend_start=prepend,
        )
    raise ConfigError(f"unknown tokenizer kind {kind!r}")
