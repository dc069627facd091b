"""Deterministic hashed n-gram features for short social media texts.

Tokens are hashed with FNV-1a (64-bit) into a power-of-two bucket space, so
feature vectors are bit-identical across runs, processes, and platforms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_USER_RE = re.compile(r"@\w+")
# <url>/<user> are emitted by normalization and must survive re-tokenization.
_TOKEN_RE = re.compile(r"<url>|<user>|\w+")


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash; the one hash function behind every feature index."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FeaturizerConfig:
    dim: int = 2**18
    ngram_orders: frozenset = frozenset({1, 2})
    lowercase: bool = True
    normalize_urls_users: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ngram_orders", frozenset(self.ngram_orders))
        if self.dim < 2**10 or self.dim & (self.dim - 1):
            raise ValueError("dim must be a power of two >= 1024")
        if not self.ngram_orders or not self.ngram_orders <= {1, 2, 3}:
            raise ValueError("ngram_orders must be a non-empty subset of {1,2,3}")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalized feature map; empty text gives the zero vector."""

    dim: int
    entries: dict

    @property
    def norm(self) -> float:
        return float(np.sqrt(sum(v * v for v in self.entries.values())))


def tokenize(text: str, config: FeaturizerConfig) -> list[str]:
    """Whitespace/punctuation tokenization with tweet-specific normalization.

    URLs collapse to `<url>`, @-mentions to `<user>`, hashtags keep the bare
    word. Idempotent on its own space-joined output.
    """
    if config.normalize_urls_users:
        text = _URL_RE.sub(" <url> ", text)
        text = _USER_RE.sub(" <user> ", text)
    if config.lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


def ngram_counts(tokens: list[str], config: FeaturizerConfig) -> dict:
    """Bucket index -> raw n-gram count, before normalization."""
    counts: dict[int, int] = {}
    for order in sorted(config.ngram_orders):
        for i in range(len(tokens) - order + 1):
            key = " ".join(tokens[i : i + order])
            idx = fnv1a_64(key.encode("utf-8")) % config.dim
            counts[idx] = counts.get(idx, 0) + 1
    return counts


def featurize(tokens: list[str], config: FeaturizerConfig) -> FeatureVector:
    counts = ngram_counts(tokens, config)
    if not counts:
        return FeatureVector(config.dim, {})
    norm = float(np.sqrt(sum(c * c for c in counts.values())))
    return FeatureVector(config.dim, {i: c / norm for i, c in counts.items()})


def texts_to_csr(texts, config: FeaturizerConfig) -> sp.csr_matrix:
    """Featurize a sequence of texts into one CSR matrix (rows L2-normalized)."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        vec = featurize(tokenize(text, config), config)
        for idx in sorted(vec.entries):
            indices.append(idx)
            data.append(vec.entries[idx])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(indptr) - 1, config.dim),
    )


def dump_features(path: str | Path, ids, vectors) -> None:
    """Debug dump: `id<TAB>index:weight,...` per example."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex_id, vec in zip(ids, vectors):
            cells = ",".join(f"{i}:{vec.entries[i]:.6g}" for i in sorted(vec.entries))
            fh.write(f"{ex_id}\t{cells}\n")


class HashingFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless text-to-CSR transformer around :func:`featurize`.

    Stateless so ``fit`` is a no-op; exists to compose with sklearn pipelines
    and grid search via get_params/set_params.
    """

    def __init__(self, dim=2**18, ngram_orders=(1, 2), lowercase=True,
                 normalize_urls_users=True):
        self.dim = dim
        self.ngram_orders = ngram_orders
        self.lowercase = lowercase
        self.normalize_urls_users = normalize_urls_users

    def _config(self) -> FeaturizerConfig:
        return FeaturizerConfig(
            dim=self.dim,
            ngram_orders=frozenset(self.ngram_orders),
            lowercase=self.lowercase,
            normalize_urls_users=self.normalize_urls_users,
        )

    def fit(self, X, y=None):
        self._config()  # validate eagerly
        return self

    def transform(self, X) -> sp.csr_matrix:
        return texts_to_csr(X, self._config())
