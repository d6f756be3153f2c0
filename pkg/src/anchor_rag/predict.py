"""Fill-mask prediction: top-k distributions and the local n-gram backend."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .exceptions import EmptyCorpusError, InvalidParameterError
from .text import Token, sentence_split, tokenize

DEFAULT_LAMBDAS = (0.6, 0.3, 0.1)
MASK_TOKEN = "[MASK]"


@dataclass(frozen=True)
class MaskedQuery:
    tokens: tuple[Token, ...]
    mask_position: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not 0 <= self.mask_position < len(self.tokens):
            raise IndexError(f"mask_position {self.mask_position} out of range for {len(self.tokens)} tokens")

    @property
    def hidden(self) -> Token:
        return self.tokens[self.mask_position]

    def left(self) -> str | None:
        p = self.mask_position
        return self.tokens[p - 1].normalized if p > 0 else None

    def right(self) -> str | None:
        p = self.mask_position
        return self.tokens[p + 1].normalized if p + 1 < len(self.tokens) else None

    def masked_text(self, marker: str = MASK_TOKEN) -> str:
        return " ".join(
            marker if i == self.mask_position else t.surface for i, t in enumerate(self.tokens)
        )


@dataclass(frozen=True)
class TopKDistribution:
    """Truncated predictive distribution at a masked position.

    ``entries`` are sorted by probability descending with ties broken by
    token, hold distinct tokens, and carry strictly positive mass summing
    to at most one.
    """

    entries: tuple[tuple[str, float], ...]
    k: int

    def __post_init__(self):
        entries = tuple((str(t), float(p)) for t, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.k < 1:
            raise InvalidParameterError("k must be >= 1")
        if len(entries) > self.k:
            raise ValueError(f"{len(entries)} entries exceed k={self.k}")
        tokens = [t for t, _ in entries]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in distribution")
        if any(not (p > 0.0) or not math.isfinite(p) for _, p in entries):
            raise ValueError("probabilities must be finite and > 0")
        if math.fsum(p for _, p in entries) > 1.0 + 1e-9:
            raise ValueError("probabilities sum to more than 1")
        if list(entries) != sorted(entries, key=_order_key):
            raise ValueError("entries must be sorted by (prob desc, token asc)")

    @classmethod
    def from_scores(cls, scores: Mapping[str, float], k: int) -> "TopKDistribution":
        """Normalize non-negative ``scores`` to unit mass and keep the top ``k``."""
        total = math.fsum(scores.values())
        if total <= 0:
            return cls((), k)
        ranked = sorted(((t, s / total) for t, s in scores.items() if s > 0), key=_order_key)
        return cls(tuple(ranked[:k]), k)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def tokens(self) -> list[str]:
        return [t for t, _ in self.entries]

    @property
    def probs(self) -> list[float]:
        return [p for _, p in self.entries]

    def renormalized(self) -> list[float]:
        total = math.fsum(self.probs)
        return [p / total for p in self.probs]

    def truncate(self, j: int) -> "TopKDistribution":
        return TopKDistribution(self.entries[:j], j)


def _order_key(entry: tuple[str, float]):
    return (-entry[1], entry[0])


class Predictor(Protocol):
    def fill_mask(self, query: MaskedQuery, k: int) -> TopKDistribution: ...


def fill_mask(predictor: Predictor, query: MaskedQuery, k: int) -> TopKDistribution:
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    dist = predictor.fill_mask(query, k)
    if len(dist) > k:
        dist = dist.truncate(k)
    return dist


@dataclass
class NgramModel:
    """Count tables for a symmetric fill-mask n-gram predictor.

    The trigram table is keyed on ``(left, center, right)`` so the masked
    token is scored with one token of context on each side.
    """

    trigram: Counter = field(default_factory=Counter)
    bigram: Counter = field(default_factory=Counter)
    unigram: Counter = field(default_factory=Counter)
    lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS

    def __post_init__(self):
        self.lambdas = tuple(float(x) for x in self.lambdas)
        if len(self.lambdas) != 3 or any(x < 0 for x in self.lambdas):
            raise InvalidParameterError("lambdas must be three non-negative weights")
        if abs(math.fsum(self.lambdas) - 1.0) > 1e-9:
            raise InvalidParameterError(f"lambdas must sum to 1, got {self.lambdas}")
        self._by_outer = defaultdict(Counter)
        for (left, center, right), c in self.trigram.items():
            self._by_outer[(left, right)][center] += c
        self._by_left = defaultdict(Counter)
        for (left, center), c in self.bigram.items():
            self._by_left[left][center] += c
        self._unigram_total = sum(self.unigram.values())

    @property
    def vocabulary(self) -> frozenset[str]:
        return frozenset(self.unigram)

    def context_levels(self, query: MaskedQuery) -> dict[str, dict[str, float]]:
        """Per-level conditional distributions available for ``query``.

        Keys are ``"trigram"``, ``"bigram"`` and ``"unigram"``; a level is
        absent when its context is missing from the query or unseen in
        training.
        """
        left, right = query.left(), query.right()
        levels = {}
        if left is not None and right is not None:
            counts = self._by_outer.get((left, right))
            if counts:
                levels["trigram"] = _normalize_counts(counts)
        if left is not None:
            counts = self._by_left.get(left)
            if counts:
                levels["bigram"] = _normalize_counts(counts)
        if self._unigram_total:
            levels["unigram"] = _normalize_counts(self.unigram)
        return levels

    def fill_mask(self, query: MaskedQuery, k: int) -> TopKDistribution:
        return ngram_score(self, query, k)


def _normalize_counts(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {w: c / total for w, c in counts.items()}


def ngram_train(corpus: Iterable[str], lambdas: Sequence[float] = DEFAULT_LAMBDAS) -> NgramModel:
    """Count unigrams, left bigrams and symmetric trigrams within sentences."""
    tri, bi, uni = Counter(), Counter(), Counter()
    for doc in corpus:
        for sentence in sentence_split(doc):
            words = [t.normalized for t in tokenize(sentence)]
            uni.update(words)
            bi.update(zip(words, words[1:]))
            tri.update(zip(words, words[1:], words[2:]))
    if not uni:
        raise EmptyCorpusError("corpus has no tokens")
    return NgramModel(tri, bi, uni, tuple(lambdas))


_LEVEL_INDEX = {"trigram": 0, "bigram": 1, "unigram": 2}


def ngram_score(model: NgramModel, query: MaskedQuery, k: int) -> TopKDistribution:
    """Interpolated trigram/bigram/unigram scores, renormalized then cut to top-k.

    Missing levels drop out and their weight is spread over the remaining
    ones. With no weighted evidence at all, the result is uniform over the
    first ``min(k, |V|)`` vocabulary entries in lexicographic order.
    """
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    levels = model.context_levels(query)
    weights = {name: model.lambdas[_LEVEL_INDEX[name]] for name in levels}
    total_weight = math.fsum(weights.values())
    if total_weight <= 0:
        vocab = sorted(model.vocabulary)[:k]
        return TopKDistribution(tuple((w, 1.0 / len(vocab)) for w in vocab), k)
    scores: dict[str, float] = {}
    # per-token terms are added in fixed level order so scores do not depend on dict order
    for name in ("trigram", "bigram", "unigram"):
        if name not in levels or weights[name] == 0:
            continue
        lam = weights[name] / total_weight
        for w, p in levels[name].items():
            scores[w] = scores.get(w, 0.0) + lam * p
    return TopKDistribution.from_scores(scores, k)
