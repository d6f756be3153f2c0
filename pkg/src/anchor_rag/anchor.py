"""Anchor identification by masked-prediction entropy."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .exceptions import EmptyDistributionError, InvalidParameterError, NoCandidatesError
from .predict import MaskedQuery, Predictor, TopKDistribution, fill_mask
from .text import Token

DEFAULT_K = 10
DEFAULT_CONTEXT_WINDOW = 5


def entropy(dist: TopKDistribution | Sequence[float]) -> float:
    """Shannon entropy in nats of the renormalized distribution."""
    probs = dist.probs if isinstance(dist, TopKDistribution) else list(dist)
    if not probs:
        raise EmptyDistributionError("entropy of an empty distribution")
    total = math.fsum(probs)
    if total <= 0:
        raise EmptyDistributionError("distribution has no mass")
    h = -math.fsum((p / total) * math.log(p / total) for p in probs if p > 0)
    # -0.0 from a single certain outcome
    return max(h, 0.0)


@dataclass(frozen=True)
class SelectionPolicy:
    """How many candidates become anchors.

    ``alpha`` scales the candidate count, ``m_max`` caps it, and ``tau``
    optionally keeps only candidates whose entropy strictly exceeds it.
    """

    alpha: float = 0.2
    m_max: int = 3
    tau: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParameterError("alpha must be > 0")
        if self.m_max < 1:
            raise InvalidParameterError("m_max must be >= 1")


@dataclass(frozen=True)
class AnchorCandidate:
    position: int
    token: Token
    distribution: TopKDistribution
    entropy_nats: float


@dataclass(frozen=True)
class Anchor:
    position: int
    token: Token
    entropy_nats: float
    context_window: tuple[Token, ...]

    def query_text(self) -> str:
        """Anchor token followed by its context, as a retrieval query."""
        return " ".join([self.token.normalized] + [t.normalized for t in self.context_window])


def mask_at(tokens: Sequence[Token], position: int) -> MaskedQuery:
    if not 0 <= position < len(tokens):
        raise IndexError(f"position {position} out of range for {len(tokens)} tokens")
    return MaskedQuery(tuple(tokens), position)


def select_anchor_count(n_candidates: int, policy: SelectionPolicy = SelectionPolicy()) -> int:
    if n_candidates < 0:
        raise InvalidParameterError("n_candidates must be >= 0")
    if n_candidates == 0:
        return 0
    # round before ceil so that 0.2 * 10 is 2, not 3
    m = math.ceil(round(policy.alpha * n_candidates, 9))
    return max(1, min(m, policy.m_max))


def score_candidates(
    tokens: Sequence[Token], predictor: Predictor, k: int = DEFAULT_K, n_jobs: int = 1
) -> list[AnchorCandidate]:
    """Mask each non-stopword token and score its predictive entropy."""
    positions = [t.position for t in tokens if not t.is_stopword]

    def score(pos: int) -> AnchorCandidate:
        dist = fill_mask(predictor, mask_at(tokens, pos), k)
        return AnchorCandidate(pos, tokens[pos], dist, entropy(dist))

    if n_jobs > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(score, positions))
    return [score(p) for p in positions]


def select_anchors(
    tokens: Sequence[Token],
    candidates: Sequence[AnchorCandidate],
    policy: SelectionPolicy = SelectionPolicy(),
    context_window: int = DEFAULT_CONTEXT_WINDOW,
) -> list[Anchor]:
    m = select_anchor_count(len(candidates), policy)
    eligible = [c for c in candidates if policy.tau is None or c.entropy_nats > policy.tau]
    eligible.sort(key=lambda c: (-c.entropy_nats, c.position))
    chosen = sorted(eligible[:m], key=lambda c: c.position)
    anchors = []
    for c in chosen:
        left = tokens[max(0, c.position - context_window) : c.position]
        right = tokens[c.position + 1 : c.position + 1 + context_window]
        anchors.append(Anchor(c.position, c.token, c.entropy_nats, tuple(left) + tuple(right)))
    return anchors


def identify_anchors(
    tokens: Sequence[Token],
    predictor: Predictor,
    k: int = DEFAULT_K,
    policy: SelectionPolicy = SelectionPolicy(),
    context_window: int = DEFAULT_CONTEXT_WINDOW,
    n_jobs: int = 1,
) -> list[Anchor]:
    """Return the highest-entropy non-stopword positions, ordered by position.

    Raises :class:`NoCandidatesError` when every token is a stopword so the
    caller can fall back to querying with the whole question.
    """
    if not tokens:
        raise InvalidParameterError("tokens must be non-empty")
    if k < 2:
        raise InvalidParameterError("k must be >= 2; a single candidate always has zero entropy")
    candidates = score_candidates(tokens, predictor, k, n_jobs)
    if not candidates:
        raise NoCandidatesError("every token is a stopword")
    return select_anchors(tokens, candidates, policy, context_window)
