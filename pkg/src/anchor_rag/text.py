"""Tokenization, answer normalization, stopword filtering and sentence splitting."""

from __future__ import annotations

import re
import string
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

STOPWORDS_VERSION = "v1"

_WORD_RE = re.compile(r"[^\W_]+")
_SENTENCE_END_RE = re.compile(r"(?<=[.!?])\s+")
_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


@dataclass(frozen=True)
class Token:
    surface: str
    normalized: str
    position: int
    is_stopword: bool
    # character offsets into the NFC-normalized text
    start: int = 0
    end: int = 0


@lru_cache(maxsize=None)
def load_stopwords() -> frozenset[str]:
    """Return the bundled stopword list."""
    raw = resources.files("anchor_rag").joinpath("resources/stopwords.txt").read_text("utf-8")
    words = (line.strip() for line in raw.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[Token]:
    """Split ``text`` into word tokens.

    Splits on whitespace and punctuation; punctuation-only fragments are
    dropped. Input is NFC-normalized first, and ``start``/``end`` refer to
    the normalized string.
    """
    if stopwords is None:
        stopwords = load_stopwords()
    tokens = []
    for i, m in enumerate(_WORD_RE.finditer(nfc(text))):
        norm = m.group().lower()
        tokens.append(Token(m.group(), norm, i, norm in stopwords, m.start(), m.end()))
    return tokens


def normalized_tokens(text: str) -> list[str]:
    return [t.normalized for t in tokenize(text)]


def content_tokens(text: str) -> list[str]:
    """Normalized tokens with stopwords removed."""
    return [t.normalized for t in tokenize(text) if not t.is_stopword]


def _strip_punctuation(text: str) -> str:
    return "".join(
        ch for ch in text if ch not in string.punctuation and not unicodedata.category(ch).startswith("P")
    )


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = _strip_punctuation(nfc(text).lower())
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def sentence_split(text: str) -> list[str]:
    """Split on ``.``, ``!`` or ``?`` followed by whitespace or end of text."""
    return [s.strip() for s in _SENTENCE_END_RE.split(text) if s.strip()]
