"""Estimator-style front ends over the anchor, retrieval and generation modules."""

from __future__ import annotations

import numbers
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _validation as v
from .anchor import (
    DEFAULT_CONTEXT_WINDOW,
    DEFAULT_K,
    Anchor,
    AnchorCandidate,
    SelectionPolicy,
    score_candidates,
    select_anchors,
)
from .exceptions import InvalidParameterError
from .generate import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_PROMPT_BUDGET,
    DEFAULT_TEMPLATE,
    ExtractiveBackend,
    assemble_prompt,
    generate,
    load_template,
    marginalize,
    sequence_prob,
)
from .index import (
    DEFAULT_DIMENSION,
    DEFAULT_OVERLAP,
    DEFAULT_TEMPERATURE,
    DEFAULT_WINDOW,
    FlatIndex,
    HashedEmbedder,
    RetrievalResult,
    build_index,
    retrieve,
)
from .predict import DEFAULT_LAMBDAS, ngram_train
from .text import Token, tokenize


class AnchorSelector(TransformerMixin, BaseEstimator):
    """Turn questions into entropy-selected anchors.

    ``fit`` trains the local n-gram predictor on a corpus unless a
    ``predictor`` is supplied; ``transform`` maps each question to its list
    of :class:`~anchor_rag.anchor.Anchor`.
    """

    def __init__(self, k=DEFAULT_K, alpha=0.2, m_max=3, tau=None, context_window=DEFAULT_CONTEXT_WINDOW,
                 ngram_lambdas=DEFAULT_LAMBDAS, predictor=None, n_jobs=1):
        self.k = k
        self.alpha = alpha
        self.m_max = m_max
        self.tau = tau
        self.context_window = context_window
        self.ngram_lambdas = ngram_lambdas
        self.predictor = predictor
        self.n_jobs = n_jobs

    def _check_params(self):
        v.check_scalar("k", self.k, numbers.Integral, 2)
        v.check_scalar("alpha", self.alpha, numbers.Real, 0, include_min=False)
        v.check_scalar("m_max", self.m_max, numbers.Integral, 1)
        if self.tau is not None:
            v.check_scalar("tau", self.tau, numbers.Real)
        v.check_scalar("context_window", self.context_window, numbers.Integral, 0)
        v.check_scalar("n_jobs", self.n_jobs, numbers.Integral, 1)
        v.check_lambdas(self.ngram_lambdas)

    @property
    def policy(self) -> SelectionPolicy:
        return SelectionPolicy(self.alpha, self.m_max, self.tau)

    def fit(self, X=None, y=None):
        self._check_params()
        if self.predictor is not None:
            self.predictor_ = self.predictor
        else:
            docs = v.check_documents(X)
            self.predictor_ = ngram_train([d.text for d in docs], v.check_lambdas(self.ngram_lambdas))
        return self

    def score_question(self, question: str) -> tuple[list[Token], list[AnchorCandidate], list[Anchor]]:
        """Tokens, every scored candidate, and the selected anchors for one question."""
        check_is_fitted(self, "predictor_")
        tokens = tokenize(question)
        if not tokens:
            return tokens, [], []
        candidates = score_candidates(tokens, self.predictor_, self.k, self.n_jobs)
        anchors = select_anchors(tokens, candidates, self.policy, self.context_window) if candidates else []
        return tokens, candidates, anchors

    def transform(self, X) -> list[list[Anchor]]:
        return [self.score_question(q)[2] for q in v.check_questions(X)]


@dataclass(frozen=True)
class Answer:
    question: str
    mode: str
    answer: str
    marginal_prob: float
    anchors: tuple[Anchor, ...]
    evidence: tuple[RetrievalResult, ...]

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "marginal_prob": self.marginal_prob,
            "anchors": [a.token.normalized for a in self.anchors],
            "evidence": [
                {"chunk_id": r.chunk.chunk_id, "similarity": r.similarity, "weight": r.weight}
                for r in self.evidence
            ],
        }


class AnchorRAG(BaseEstimator):
    """Question answering over a corpus with entropy-anchored retrieval.

    ``mode`` selects the pipeline: ``"anchor-rag"`` retrieves with queries
    built around high-entropy anchors, ``"naive-rag"`` retrieves with the
    whole question, and ``"no-retrieval"`` generates from the bare question.
    Backends default to the deterministic local ones (n-gram predictor,
    hashed embedder, extractive generator).
    """

    def __init__(self, mode="anchor-rag", k=DEFAULT_K, top_n=5, alpha=0.2, m_max=3, tau=None,
                 context_window=DEFAULT_CONTEXT_WINDOW, temperature=DEFAULT_TEMPERATURE,
                 window=DEFAULT_WINDOW, overlap=DEFAULT_OVERLAP, dimension=DEFAULT_DIMENSION, seed=0,
                 ngram_lambdas=DEFAULT_LAMBDAS, template_id=DEFAULT_TEMPLATE,
                 prompt_budget=DEFAULT_PROMPT_BUDGET, max_tokens=DEFAULT_MAX_TOKENS,
                 predictor=None, embedder=None, generator=None, n_jobs=1):
        self.mode = mode
        self.k = k
        self.top_n = top_n
        self.alpha = alpha
        self.m_max = m_max
        self.tau = tau
        self.context_window = context_window
        self.temperature = temperature
        self.window = window
        self.overlap = overlap
        self.dimension = dimension
        self.seed = seed
        self.ngram_lambdas = ngram_lambdas
        self.template_id = template_id
        self.prompt_budget = prompt_budget
        self.max_tokens = max_tokens
        self.predictor = predictor
        self.embedder = embedder
        self.generator = generator
        self.n_jobs = n_jobs

    def _check_params(self):
        v.check_mode(self.mode)
        v.check_scalar("top_n", self.top_n, numbers.Integral, 1)
        v.check_scalar("temperature", self.temperature, numbers.Real, 0, include_min=False)
        v.check_scalar("window", self.window, numbers.Integral, 1)
        v.check_scalar("overlap", self.overlap, numbers.Integral, 0)
        if self.overlap >= self.window:
            raise InvalidParameterError("overlap must be smaller than window")
        v.check_scalar("dimension", self.dimension, numbers.Integral, 8)
        v.check_scalar("seed", self.seed, numbers.Integral)
        v.check_scalar("prompt_budget", self.prompt_budget, numbers.Integral, 1)
        v.check_scalar("max_tokens", self.max_tokens, numbers.Integral, 1)
        load_template(self.template_id)

    def _selector(self) -> AnchorSelector:
        return AnchorSelector(self.k, self.alpha, self.m_max, self.tau, self.context_window,
                              self.ngram_lambdas, self.predictor, self.n_jobs)

    def fit(self, X=None, y=None, index: FlatIndex | None = None):
        """Train the predictor on ``X`` and build (or adopt) the retrieval index.

        ``X`` may be omitted when an ``index`` is given; anchor mode then
        requires a ``predictor``.
        """
        self._check_params()
        docs = None if X is None else v.check_documents(X)
        if docs is None and self.predictor is None:
            # no corpus to train the n-gram predictor on: anchor mode stays unavailable
            self.selector_ = None
        else:
            self.selector_ = self._selector().fit(docs)
        self.embedder_ = self.embedder if self.embedder is not None else HashedEmbedder(self.dimension, self.seed)
        if index is not None:
            if index.embedder is None:
                index.embedder = self.embedder_
            self.index_ = index
        elif self.mode != "no-retrieval":
            if docs is None:
                raise InvalidParameterError("a corpus or a prebuilt index is required for retrieval modes")
            self.index_ = build_index(docs, self.embedder_, self.window, self.overlap)
        else:
            self.index_ = None
        self.generator_ = self.generator if self.generator is not None else ExtractiveBackend()
        return self

    def answer(self, question: str, mode: str | None = None) -> Answer:
        check_is_fitted(self, "generator_")
        mode = v.check_mode(mode or self.mode)
        if not tokenize(question):
            raise InvalidParameterError("question has no tokens")
        if mode == "no-retrieval":
            prompt = assemble_prompt(question, (), (), self.template_id, self.prompt_budget)
            result = generate(self.generator_, prompt, self.max_tokens)
            return Answer(question, mode, result.text, sequence_prob(result), (), ())
        if self.index_ is None:
            raise InvalidParameterError(f"mode {mode!r} needs an index; fit without mode='no-retrieval'")
        anchors = []
        if mode == "anchor-rag":
            if self.selector_ is None:
                raise InvalidParameterError("anchor-rag mode needs a corpus or a predictor at fit time")
            anchors = self.selector_.score_question(question)[2]
        retrieved = retrieve(self.index_, anchors, question, self.top_n, self.temperature)
        best = marginalize(question, anchors, retrieved, self.generator_, template_id=self.template_id,
                           max_tokens=self.max_tokens, budget=self.prompt_budget, n_jobs=self.n_jobs)
        return Answer(question, mode, best.answer, best.marginal_prob, tuple(anchors), tuple(retrieved))

    def predict(self, X) -> np.ndarray:
        answers = [self.answer(q).answer for q in v.check_questions(X)]
        return np.array(answers, dtype=object)

    def score(self, X, y) -> float:
        """Mean exact match of ``predict(X)`` against gold answer lists ``y``."""
        from .evaluation import exact_match

        preds = self.predict(X)
        golds = [[g] if isinstance(g, str) else list(g) for g in y]
        return float(np.mean([exact_match(p, g) for p, g in zip(preds, golds)]))
