"""QA metrics, dataset ingestion and pipeline evaluation runs."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from ._validation import check_mode
from .exceptions import AnchorRAGError, DataError, InvalidParameterError
from .text import normalize_answer, normalized_tokens, tokenize


@dataclass(frozen=True)
class QAExample:
    id: str
    question: str
    gold_answers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))
        if not self.gold_answers:
            raise InvalidParameterError(f"example {self.id!r} has no gold answers")


def load_dataset(path) -> list[QAExample]:
    """Read newline-delimited ``{"id", "question", "answers"}`` records."""
    examples, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(rec, dict):
                raise DataError("record is not an object", path, lineno)
            ex_id, question, answers = rec.get("id"), rec.get("question"), rec.get("answers")
            if not isinstance(ex_id, str) or not ex_id:
                raise DataError("missing or non-string 'id'", path, lineno)
            if ex_id in seen:
                raise DataError(f"duplicate id {ex_id!r}", path, lineno)
            if not isinstance(question, str) or not question.strip():
                raise DataError("missing or empty 'question'", path, lineno)
            if not isinstance(answers, list) or not answers or not all(isinstance(a, str) for a in answers):
                raise DataError("'answers' must be a non-empty array of strings", path, lineno)
            seen.add(ex_id)
            examples.append(QAExample(ex_id, question, tuple(answers)))
    return examples


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in golds))


def _token_f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(prediction: str, golds: Sequence[str]) -> float:
    """Best multiset token F1 over the gold answers."""
    pred = normalize_answer(prediction).split()
    return max(_token_f1(pred, normalize_answer(g).split()) for g in golds)


def hallucination_rate(prediction: str, evidence: Sequence[str], question: str = "") -> float:
    """Fraction of the prediction's content tokens found in neither evidence nor question."""
    content = [t.normalized for t in tokenize(prediction) if not t.is_stopword]
    if not content:
        return 0.0
    support = set(normalized_tokens(question))
    for text in evidence:
        support.update(normalized_tokens(text))
    return sum(tok not in support for tok in content) / len(content)


def diversity(responses: Sequence[str], n: int = 1) -> float:
    """Distinct-n: unique n-grams over total n-grams across ``responses``."""
    if n not in (1, 2):
        raise InvalidParameterError("n must be 1 or 2")
    grams = []
    for r in responses:
        toks = normalized_tokens(r)
        grams.extend(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))
    return len(set(grams)) / len(grams) if grams else 0.0


@dataclass
class MetricsReport:
    em: float
    f1: float
    hallucination_rate: float
    distinct1: float
    distinct2: float
    per_example: list[dict]
    config: dict = field(default_factory=dict)
    config_fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "config_fingerprint": self.config_fingerprint,
            "config": self.config,
            "aggregate": {
                "em": self.em,
                "f1": self.f1,
                "hallucination_rate": self.hallucination_rate,
                "distinct1": self.distinct1,
                "distinct2": self.distinct2,
                "n_examples": len(self.per_example),
                "n_failed": sum(r["failed"] for r in self.per_example),
            },
            "per_example": self.per_example,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def table(self) -> str:
        mode = self.config.get("mode", "?")
        agg = self.to_dict()["aggregate"]
        rows = [("mode", mode), ("examples", str(agg["n_examples"])), ("failed", str(agg["n_failed"]))]
        rows += [(name, f"{agg[name]:.4f}") for name in ("em", "f1", "hallucination_rate", "distinct1", "distinct2")]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {val}" for k, val in rows)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def dataset_digest(dataset: Sequence[QAExample]) -> str:
    h = hashlib.sha256()
    for ex in dataset:
        h.update(json.dumps([ex.id, ex.question, list(ex.gold_answers)], ensure_ascii=False).encode())
    return h.hexdigest()


def _param_repr(value):
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, (list, tuple)):
        return [_param_repr(x) for x in value]
    return getattr(value, "id", type(value).__name__)


def run_config(pipeline, dataset: Sequence[QAExample], mode: str) -> dict:
    """Every input that determines a run's output, as a flat JSON-able dict."""
    params = {k: _param_repr(val) for k, val in pipeline.get_params().items() if k != "mode"}
    index = getattr(pipeline, "index_", None)
    return {
        "mode": mode,
        **params,
        "index_fingerprint": index.fingerprint() if index is not None else None,
        "dataset_digest": dataset_digest(dataset),
    }


def fingerprint(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def evaluate_example(pipeline, example: QAExample, mode: str) -> dict:
    try:
        ans = pipeline.answer(example.question, mode)
    except AnchorRAGError as exc:
        return {
            "id": example.id, "prediction": "", "em": 0, "f1": 0.0, "hallucination": 0.0,
            "anchors": [], "chunks": [], "failed": True, "error": f"{type(exc).__name__}: {exc}",
        }
    evidence = [r.chunk.text for r in ans.evidence]
    return {
        "id": example.id,
        "prediction": ans.answer,
        "em": exact_match(ans.answer, example.gold_answers),
        "f1": f1(ans.answer, example.gold_answers),
        "hallucination": hallucination_rate(ans.answer, evidence, example.question),
        "anchors": [a.token.normalized for a in ans.anchors],
        "chunks": [r.chunk.chunk_id for r in ans.evidence],
        "failed": False,
        "error": None,
    }


def run_eval(pipeline, dataset: Sequence[QAExample], mode: str | None = None, n_jobs: int = 1) -> MetricsReport:
    """Answer every example with a fitted :class:`AnchorRAG` and score it.

    Backend failures are recorded per example (scored 0, ``failed`` set)
    rather than aborting the run. Records keep dataset order.
    """
    dataset = list(dataset)
    if not dataset:
        raise InvalidParameterError("dataset is empty")
    mode = check_mode(mode or pipeline.mode)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(lambda ex: evaluate_example(pipeline, ex, mode), dataset))
    else:
        records = [evaluate_example(pipeline, ex, mode) for ex in dataset]
    predictions = [r["prediction"] for r in records]
    config = run_config(pipeline, dataset, mode)
    return MetricsReport(
        em=_mean([r["em"] for r in records]),
        f1=_mean([r["f1"] for r in records]),
        hallucination_rate=_mean([r["hallucination"] for r in records]),
        distinct1=diversity(predictions, 1),
        distinct2=diversity(predictions, 2),
        per_example=records,
        config=config,
        config_fingerprint=fingerprint(config),
    )
