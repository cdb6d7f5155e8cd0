"""Hashed stylometric features for utterances."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .text import tokenize

# closed-class words plus the interjections and archaic forms common in drama
FUNCTION_WORDS = {
    "english-drama": frozenset("""
        a about above after again against all am an and any are as at be because been
        before being below between both but by can could did do does doing down during
        each few for from further had has have having he her here hers herself him
        himself his how i if in into is it its itself just me more most my myself no nor
        not now of off on once only or other our ours ourselves out over own same she
        should so some such than that the their theirs them themselves then there these
        they this those through to too under until up very was we were what when where
        which while who whom why will with would you your yours yourself yourselves
        shall may might must upon yet ever never also indeed quite rather perhaps well
        oh ah alas aye nay yea pray prithee thee thou thy thine hath doth art tis twas
        ere hence thence whence hither thither sir madam why lo o ay
    """.split()),
}

_LENGTH_EDGES = (3, 6, 10, 16, 25, 40)


@dataclass(frozen=True)
class FeatureConfig:
    ngram_orders: tuple[int, ...] = (1, 2, 3)
    n_features: int = 2 ** 14
    function_words: str = "english-drama"
    length_edges: tuple[int, ...] = _LENGTH_EDGES
    max_tokens: int = 64
    signed: bool = True

    def __post_init__(self):
        if self.n_features <= 0:
            raise ValueError("n_features must be positive")
        if not self.ngram_orders or min(self.ngram_orders) < 1:
            raise ValueError("ngram_orders must be non-empty positive integers")
        if self.function_words not in FUNCTION_WORDS:
            raise ValueError(f"unknown function word list {self.function_words!r}")

    def to_dict(self) -> dict:
        return {
            "ngram_orders": list(self.ngram_orders),
            "n_features": self.n_features,
            "function_words": self.function_words,
            "length_edges": list(self.length_edges),
            "max_tokens": self.max_tokens,
            "signed": self.signed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        for key in ("ngram_orders", "length_edges"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def feature_names(text: str, config: FeatureConfig) -> list[str]:
    """Un-hashed feature strings for ``text`` (one entry per occurrence)."""
    toks = tokenize(text)[: config.max_tokens]
    fwords = FUNCTION_WORDS[config.function_words]
    names = []
    for tok in toks:
        if not tok.is_word:
            names.append("p:" + tok.text)
            continue
        lower = tok.text.lower()
        if lower in fwords:
            names.append("f:" + lower)
        padded = f"^{tok.text}$"
        for n in config.ngram_orders:
            names.extend("c:" + padded[i:i + n] for i in range(len(padded) - n + 1))
    if toks:
        names.append("L:" + str(int(np.searchsorted(config.length_edges, len(toks), side="right"))))
    return names


def _hash(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class FeatureExtractor:
    """Maps texts to sparse hashed count vectors, memoizing per text."""

    def __init__(self, config: FeatureConfig):
        self.config = config
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._buckets: dict[str, tuple[int, float]] = {}

    def indices_values(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        counts: dict[int, float] = {}
        buckets = self._buckets
        for name in feature_names(text, self.config):
            b = buckets.get(name)
            if b is None:
                b = buckets[name] = self._bucket(name)
            counts[b[0]] = counts.get(b[0], 0.0) + b[1]
        idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
        val = np.array([counts[i] for i in idx.tolist()], dtype=np.float64)
        keep = val != 0
        out = (idx[keep], val[keep])
        self._cache[text] = out
        return out

    def _bucket(self, name: str) -> tuple[int, float]:
        h = _hash(name)
        sign = -1.0 if (self.config.signed and (h >> 31) & 1) else 1.0
        return h % self.config.n_features, sign

    def vector(self, text: str) -> sp.csr_matrix:
        idx, val = self.indices_values(text)
        return sp.csr_matrix((val, idx, [0, len(idx)]), shape=(1, self.config.n_features))

    def matrix(self, texts) -> sp.csr_matrix:
        """Row-stacked feature vectors, one row per text."""
        indptr = [0]
        indices, data = [], []
        for t in texts:
            idx, val = self.indices_values(t)
            indices.append(idx)
            data.append(val)
            indptr.append(indptr[-1] + len(idx))
        return sp.csr_matrix(
            (np.concatenate(data) if data else np.zeros(0), np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64), indptr),
            shape=(len(indptr) - 1, self.config.n_features),
        )


def extract_features(text: str, config: FeatureConfig | None = None) -> sp.csr_matrix:
    """Sparse ``1 x n_features`` hashed feature vector of one utterance."""
    return FeatureExtractor(config or FeatureConfig()).vector(text)
