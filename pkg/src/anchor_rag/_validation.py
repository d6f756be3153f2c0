"""Input checks shared by the estimators."""

from __future__ import annotations

import numbers
from typing import Iterable

from .exceptions import InvalidParameterError
from .index import Document

MODES = ("anchor-rag", "naive-rag", "no-retrieval")


def check_documents(X) -> list[Document]:
    """Coerce ``X`` to a list of :class:`Document`.

    Accepts documents, ``{"id", "title", "text"}`` mappings, or bare strings
    (which get their position as id).
    """
    if X is None or isinstance(X, (str, bytes)):
        raise InvalidParameterError("X must be an iterable of documents, not a single string")
    docs = []
    for i, item in enumerate(X):
        if isinstance(item, Document):
            docs.append(item)
        elif isinstance(item, str):
            docs.append(Document(str(i), "", item))
        elif isinstance(item, dict):
            if "text" not in item:
                raise InvalidParameterError(f"document {i} has no 'text'")
            docs.append(Document(str(item.get("id", i)), item.get("title", ""), item["text"]))
        else:
            raise InvalidParameterError(f"unsupported document type {type(item).__name__}")
    return docs


def check_questions(X) -> list[str]:
    if isinstance(X, (str, bytes)):
        raise InvalidParameterError("X must be an iterable of questions, not a single string")
    questions = list(X)
    for q in questions:
        if not isinstance(q, str):
            raise InvalidParameterError(f"question must be a string, got {type(q).__name__}")
    return questions


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def check_scalar(name: str, value, kind=numbers.Real, min_val=None, max_val=None, include_min=True):
    if isinstance(value, bool) or not isinstance(value, kind):
        raise InvalidParameterError(f"{name} must be {kind.__name__}, got {value!r}")
    if min_val is not None and (value < min_val or (value == min_val and not include_min)):
        op = ">=" if include_min else ">"
        raise InvalidParameterError(f"{name} must be {op} {min_val}, got {value!r}")
    if max_val is not None and value > max_val:
        raise InvalidParameterError(f"{name} must be <= {max_val}, got {value!r}")
    return value


def check_lambdas(values: Iterable[float]) -> tuple[float, float, float]:
    values = tuple(float(v) for v in values)
    if len(values) != 3 or any(v < 0 for v in values) or abs(sum(values) - 1) > 1e-9:
        raise InvalidParameterError(f"ngram_lambdas must be three non-negative weights summing to 1, got {values}")
    return values
