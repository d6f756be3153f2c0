"""Prompt assembly, greedy generation, sequence probabilities and marginalization."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Protocol, Sequence, Union

from .anchor import Anchor
from .exceptions import (
    EmptyGenerationError,
    InvalidParameterError,
    PromptBudgetError,
    UnknownTemplateError,
)
from .index import RetrievalResult
from .text import normalize_answer, normalized_tokens, sentence_split

DEFAULT_TEMPLATE = "default-v1"
DEFAULT_PROMPT_BUDGET = 1024
DEFAULT_MAX_TOKENS = 64
END_MARKER = "</s>"


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    if not template_id or "/" in template_id or template_id.startswith("."):
        raise UnknownTemplateError(template_id)
    res = resources.files("anchor_rag").joinpath(f"resources/{template_id}.txt")
    if not res.is_file():
        raise UnknownTemplateError(template_id)
    return res.read_text("utf-8")


@dataclass(frozen=True)
class Passage:
    chunk_id: str
    text: str
    weight: float


@dataclass(frozen=True)
class Prompt:
    question: str
    anchors: tuple[Anchor, ...] = ()
    passages: tuple[Passage, ...] = ()
    template_id: str = DEFAULT_TEMPLATE

    def render(self) -> str:
        template = load_template(self.template_id)
        passages = "".join(f"[{p.chunk_id}] {p.text}\n" for p in self.passages)
        anchors = ""
        if self.anchors:
            anchors = "Anchors: " + ", ".join(a.token.surface for a in self.anchors) + "\n"
        return template.format(passages=passages, anchors=anchors, question=self.question)


def prompt_length(text: str) -> int:
    """Prompt size in whitespace-delimited tokens."""
    return len(text.split())


def assemble_prompt(question: str, anchors: Sequence[Anchor] = (), retrieved: Sequence[RetrievalResult] = (),
                    template_id: str = DEFAULT_TEMPLATE, budget: int = DEFAULT_PROMPT_BUDGET) -> Prompt:
    """Render passages in weight order, dropping the lightest until the prompt fits ``budget``."""
    load_template(template_id)
    ranked = sorted(enumerate(retrieved), key=lambda item: (-item[1].weight, item[0]))
    passages = [Passage(r.chunk.chunk_id, r.chunk.text, r.weight) for _, r in ranked]
    anchors = tuple(sorted(anchors, key=lambda a: a.position))
    while True:
        prompt = Prompt(question, anchors, tuple(passages), template_id)
        if prompt_length(prompt.render()) <= budget:
            return prompt
        if not passages:
            raise PromptBudgetError(f"prompt exceeds {budget} tokens without any passages")
        passages.pop()


@dataclass(frozen=True)
class GenerationResult:
    text: str
    steps: tuple[tuple[str, float], ...]
    log_prob: float
    # the backend gave no per-token probabilities; every step is recorded as 1.0
    prob_free: bool = False

    def __post_init__(self):
        for tok, p in self.steps:
            if not (0.0 < p <= 1.0):
                raise ValueError(f"step probability {p} for {tok!r} outside (0, 1]")

    @classmethod
    def from_steps(cls, steps: Sequence[tuple[str, float]], text: str | None = None,
                   prob_free: bool = False) -> "GenerationResult":
        steps = tuple((str(t), float(p)) for t, p in steps)
        if text is None:
            text = detokenize([t for t, _ in steps])
        log_prob = math.fsum(math.log(p) for _, p in steps) if all(p > 0 for _, p in steps) else -math.inf
        return cls(text, steps, log_prob, prob_free)


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def sequence_prob(result: GenerationResult) -> float:
    return math.prod(p for _, p in result.steps)


class StepBackend(Protocol):
    """Returns the next-token distribution given the tokens generated so far.

    ``None`` or an empty mapping ends generation.
    """

    def next_token(self, prompt: Prompt, prefix: Sequence[str]) -> Mapping[str, float] | None: ...


class SequenceBackend(Protocol):
    def complete(self, prompt: Prompt, max_tokens: int) -> GenerationResult: ...


Backend = Union[StepBackend, SequenceBackend]


def generate(backend: Backend, prompt: Prompt, max_tokens: int = DEFAULT_MAX_TOKENS) -> GenerationResult:
    """Greedy decoding: the most probable token at every step, ties by token."""
    if max_tokens < 1:
        raise InvalidParameterError("max_tokens must be >= 1")
    if hasattr(backend, "next_token"):
        steps: list[tuple[str, float]] = []
        while len(steps) < max_tokens:
            dist = backend.next_token(prompt, tuple(t for t, _ in steps))
            if not dist:
                break
            token, prob = min(dist.items(), key=lambda kv: (-kv[1], kv[0]))
            if token == END_MARKER:
                break
            steps.append((token, prob))
        result = GenerationResult.from_steps(steps)
    else:
        result = backend.complete(prompt, max_tokens)
        if len(result.steps) > max_tokens:
            result = GenerationResult.from_steps(result.steps[:max_tokens], prob_free=result.prob_free)
    if not result.steps and not result.text:
        raise EmptyGenerationError("backend produced no tokens")
    return result


def extractive_stub_generate(prompt: Prompt) -> GenerationResult:
    """Return the passage sentence matching the most anchors, with certainty.

    Sentences are scanned passage by passage; earlier passages and earlier
    sentences win ties. Without any anchor match the first sentence of the
    top passage is returned.
    """
    if not prompt.passages:
        raise EmptyGenerationError("no passages to extract from")
    anchor_words = {a.token.normalized for a in prompt.anchors}
    best, best_score = None, 0
    for passage in prompt.passages:
        for sentence in sentence_split(passage.text):
            score = len(anchor_words.intersection(normalized_tokens(sentence)))
            if score > best_score:
                best, best_score = sentence, score
    if best is None:
        sentences = sentence_split(prompt.passages[0].text)
        if not sentences:
            raise EmptyGenerationError("top passage has no sentences")
        best = sentences[0]
    return GenerationResult.from_steps([(w, 1.0) for w in best.split()])


class ExtractiveBackend:
    """Deterministic local generator backed by :func:`extractive_stub_generate`."""

    id = "extractive"

    def complete(self, prompt: Prompt, max_tokens: int) -> GenerationResult:
        result = extractive_stub_generate(prompt)
        if len(result.steps) > max_tokens:
            result = GenerationResult.from_steps(result.steps[:max_tokens])
        return result


Step = Union[tuple[str, float], Mapping[str, float]]


@dataclass
class ScriptedBackend:
    """Replays fixed next-token distributions.

    ``scripts`` maps the chunk id of the prompt's first passage, or ``None``
    as the fallback, to a list of steps. A step is a ``(token, prob)`` pair
    or a mapping of alternatives from which greedy decoding picks.
    """

    scripts: Mapping[str | None, Sequence[Step]] = field(default_factory=dict)
    id = "scripted"

    @classmethod
    def constant(cls, text: str, prob: float = 1.0) -> "ScriptedBackend":
        return cls({None: [(w, prob) for w in text.split()]})

    def _script(self, prompt: Prompt) -> Sequence[Step]:
        key = prompt.passages[0].chunk_id if prompt.passages else None
        if key in self.scripts:
            return self.scripts[key]
        return self.scripts.get(None, ())

    def next_token(self, prompt: Prompt, prefix: Sequence[str]) -> Mapping[str, float] | None:
        script = self._script(prompt)
        if len(prefix) >= len(script):
            return None
        step = script[len(prefix)]
        if isinstance(step, Mapping):
            return dict(step)
        token, prob = step
        return {token: prob}


@dataclass(frozen=True)
class AnswerCandidate:
    answer: str
    normalized: str
    per_doc: tuple[tuple[str, float], ...]
    marginal_prob: float


def marginalize_all(question: str, anchors: Sequence[Anchor], retrieved: Sequence[RetrievalResult],
                    backend: Backend, template_id: str = DEFAULT_TEMPLATE,
                    max_tokens: int = DEFAULT_MAX_TOKENS, budget: int = DEFAULT_PROMPT_BUDGET,
                    n_jobs: int = 1) -> list[AnswerCandidate]:
    """Score every distinct answer by its retrieval-weighted generation probability.

    One generation per retrieved chunk, conditioned on that chunk alone.
    Answers are grouped by normalized form; candidates come back ordered by
    marginal probability, ties by normalized answer.
    """
    if not retrieved:
        raise InvalidParameterError("marginalize needs at least one retrieved chunk")

    def run(r: RetrievalResult):
        prompt = assemble_prompt(question, anchors, [r], template_id, budget)
        try:
            return generate(backend, prompt, max_tokens)
        except EmptyGenerationError:
            return None

    if n_jobs > 1 and len(retrieved) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, retrieved))
    else:
        results = [run(r) for r in retrieved]

    groups: dict[str, dict] = {}
    for r, res in zip(retrieved, results):
        if res is None:
            continue
        key = normalize_answer(res.text)
        g = groups.setdefault(key, {"answer": res.text, "per_doc": [], "terms": []})
        p = sequence_prob(res)
        g["per_doc"].append((r.chunk.chunk_id, p))
        g["terms"].append(r.weight * p)
    if not groups:
        raise EmptyGenerationError("every per-chunk generation was empty")
    candidates = [
        AnswerCandidate(g["answer"], key, tuple(g["per_doc"]), math.fsum(g["terms"]))
        for key, g in groups.items()
    ]
    candidates.sort(key=lambda c: (-c.marginal_prob, c.normalized))
    return candidates


def marginalize(question: str, anchors: Sequence[Anchor], retrieved: Sequence[RetrievalResult],
                backend: Backend, **kwargs) -> AnswerCandidate:
    return marginalize_all(question, anchors, retrieved, backend, **kwargs)[0]
