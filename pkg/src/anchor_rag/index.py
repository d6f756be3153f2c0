"""Corpus ingestion, chunking, hashed embeddings and an exact flat cosine index."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .exceptions import (
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyCorpusError,
    EmptyIndexError,
    IndexBuildError,
    InvalidParameterError,
)
from .text import content_tokens, nfc, tokenize

DEFAULT_WINDOW = 100
DEFAULT_OVERLAP = 20
DEFAULT_DIMENSION = 4096
DEFAULT_TEMPERATURE = 0.1

INDEX_FORMAT = "anchor-rag-flat-index"
INDEX_VERSION = 1
MANIFEST_FILE = "manifest.json"
VECTORS_FILE = "vectors.f32"
CHUNKS_FILE = "chunks.jsonl"


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise InvalidParameterError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    chunk_id: str
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True)
class RetrievalResult:
    chunk: Chunk
    similarity: float
    weight: float


def load_corpus(path) -> list[Document]:
    """Read newline-delimited JSON records with ``id``, ``title`` and ``text``."""
    docs = []
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
            doc_id, text, title = rec.get("id"), rec.get("text"), rec.get("title", "")
            if not isinstance(doc_id, str) or not doc_id:
                raise DataError("missing or non-string 'id'", path, lineno)
            if not isinstance(text, str) or not text:
                raise DataError("missing or empty 'text'", path, lineno)
            if not isinstance(title, str):
                raise DataError("non-string 'title'", path, lineno)
            docs.append(Document(doc_id, title, text))
    return docs


def cosine(q, d) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.shape != d.shape:
        raise DimensionMismatchError(f"dimension mismatch: {q.shape} vs {d.shape}")
    nq, nd = np.linalg.norm(q), np.linalg.norm(d)
    if nq == 0 or nd == 0:
        return 0.0
    return float(np.clip(np.dot(q, d) / (nq * nd), -1.0, 1.0))


class Embedder(Protocol):
    id: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedEmbedder:
    """Bag of content tokens hashed into ``dimension`` buckets, L2-normalized."""

    id = "hashed-v1"

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0):
        if dimension < 8:
            raise InvalidParameterError("dimension must be >= 8")
        self.dimension = int(dimension)
        self.seed = int(seed)
        self._key = self.seed.to_bytes(8, "little", signed=True)

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for i, text in enumerate(texts):
            for tok in content_tokens(text):
                out[i, self.bucket(tok)] += 1.0
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return out


def embed_hashed(texts: Sequence[str], dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> np.ndarray:
    return HashedEmbedder(dimension, seed).embed(texts)


def chunk_document(doc: Document, window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    """Slide a ``window``-token window with stride ``window - overlap``.

    Chunk text is the verbatim span of the (NFC) document from the first
    token of the window up to the next window-external token.
    """
    if not (window > overlap >= 0):
        raise InvalidParameterError(f"need window > overlap >= 0, got window={window}, overlap={overlap}")
    text = nfc(doc.text)
    tokens = tokenize(text)
    n = len(tokens)
    stride = window - overlap
    chunks = []
    start = 0
    while start < n:
        end = min(start + window, n)
        char_end = tokens[end].start if end < n else len(text)
        piece = text[tokens[start].start : char_end].strip()
        chunks.append(Chunk(doc.id, f"{doc.id}#{len(chunks)}", piece, (start, end)))
        if end == n:
            break
        start += stride
    return chunks


def _softmax(values: Sequence[float], temperature: float) -> list[float]:
    z = [v / temperature for v in values]
    top = max(z)
    e = [math.exp(v - top) for v in z]
    total = math.fsum(e)
    return [x / total for x in e]


class FlatIndex:
    """Immutable exact full-scan cosine index over chunk vectors."""

    def __init__(self, chunks: Sequence[Chunk], vectors: np.ndarray, embedder: Embedder | None = None,
                 window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP):
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(chunks):
            raise ValueError("vectors must be a (n_chunks, dimension) array")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors must be finite")
        if embedder is not None and embedder.dimension != vectors.shape[1]:
            raise DimensionMismatchError("embedder dimension differs from index dimension")
        ids = [c.chunk_id for c in chunks]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("chunk ids must be unique")
        self.chunks = tuple(chunks)
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self._rows = vectors.astype(np.float64)
        self._norms = np.linalg.norm(self._rows, axis=1)
        self.embedder = embedder
        self.window = window
        self.overlap = overlap

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def similarities(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise DimensionMismatchError(f"query has shape {q.shape}, index dimension is {self.dimension}")
        nq = np.linalg.norm(q)
        denom = self._norms * nq
        dots = self._rows @ q
        sims = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
        return np.clip(sims, -1.0, 1.0)

    def search(self, query, top_n: int) -> list[tuple[int, float]]:
        """Exact top-``top_n`` rows as ``(row, similarity)``, ties by row order."""
        if top_n < 1:
            raise InvalidParameterError("top_n must be >= 1")
        if not len(self):
            raise EmptyIndexError("index is empty")
        sims = self.similarities(query)
        order = np.lexsort((np.arange(len(sims)), -sims))[:top_n]
        return [(int(i), float(sims[i])) for i in order]

    def manifest(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "dimension": self.dimension,
            "count": len(self),
            "window": self.window,
            "overlap": self.overlap,
            "embedder": getattr(self.embedder, "id", None),
            "seed": getattr(self.embedder, "seed", None),
            "dtype": "<f4",
            "vectors_file": VECTORS_FILE,
            "chunks_file": CHUNKS_FILE,
        }

    def fingerprint(self) -> str:
        h = hashlib.sha256(json.dumps(self.manifest(), sort_keys=True).encode())
        h.update(self.vectors.astype("<f4").tobytes())
        for c in self.chunks:
            h.update(c.chunk_id.encode() + b"\0" + c.text.encode() + b"\0")
        return h.hexdigest()

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / MANIFEST_FILE, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.vectors.astype("<f4").tofile(path / VECTORS_FILE)
        with open(path / CHUNKS_FILE, "w", encoding="utf-8") as fh:
            for c in self.chunks:
                rec = {"doc_id": c.doc_id, "chunk_id": c.chunk_id, "text": c.text,
                       "start": c.token_span[0], "end": c.token_span[1]}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path, embedder: Embedder | None = None) -> "FlatIndex":
        path = Path(path)
        try:
            manifest = json.loads((path / MANIFEST_FILE).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read index manifest: {exc}", path / MANIFEST_FILE) from None
        if manifest.get("format") != INDEX_FORMAT or manifest.get("version") != INDEX_VERSION:
            raise DataError("unsupported index format", path / MANIFEST_FILE)
        dim, count = manifest["dimension"], manifest["count"]
        raw = np.fromfile(path / manifest["vectors_file"], dtype="<f4")
        if raw.size != dim * count:
            raise DataError(f"vector file holds {raw.size} floats, expected {dim * count}", path)
        chunks = []
        with open(path / manifest["chunks_file"], encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                chunks.append(Chunk(rec["doc_id"], rec["chunk_id"], rec["text"], (rec["start"], rec["end"])))
        if embedder is None and manifest.get("embedder") == HashedEmbedder.id:
            embedder = HashedEmbedder(dim, manifest["seed"])
        return cls(chunks, raw.reshape(count, dim), embedder, manifest["window"], manifest["overlap"])


def build_index(corpus: Iterable[Document], embedder: Embedder | None = None,
                window: int = DEFAULT_WINDOW, overlap: int = DEFAULT_OVERLAP,
                batch_size: int = 64) -> FlatIndex:
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpusError("corpus is empty")
    seen = set()
    for doc in corpus:
        if doc.id in seen:
            raise DuplicateIdError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
    if embedder is None:
        embedder = HashedEmbedder()
    chunks = [c for doc in corpus for c in chunk_document(doc, window, overlap)]
    if not chunks:
        raise EmptyCorpusError("corpus produced no chunks")
    rows = []
    for i in range(0, len(chunks), batch_size):
        batch = chunks[i : i + batch_size]
        rows.append(_embed_batch(embedder, batch))
    return FlatIndex(chunks, np.vstack(rows), embedder, window, overlap)


def _embed_batch(embedder: Embedder, batch: Sequence[Chunk]) -> np.ndarray:
    try:
        out = np.asarray(embedder.embed([c.text for c in batch]))
    except Exception:
        # re-run one at a time to attribute the failure to a chunk
        for c in batch:
            try:
                embedder.embed([c.text])
            except Exception as exc:
                raise IndexBuildError(c.chunk_id, exc) from exc
        raise
    if out.shape != (len(batch), embedder.dimension):
        raise IndexBuildError(batch[0].chunk_id, ValueError(f"embedder returned shape {out.shape}"))
    return out


def retrieve(index: FlatIndex, anchors: Sequence, question: str, top_n: int = 5,
             temperature: float = DEFAULT_TEMPERATURE) -> list[RetrievalResult]:
    """Max-similarity union of per-anchor top-n scans, softmax-weighted.

    Each anchor contributes one query (its token plus context window); with
    no anchors the whole question is the only query.
    """
    if top_n < 1:
        raise InvalidParameterError("top_n must be >= 1")
    if not temperature > 0:
        raise InvalidParameterError("temperature must be > 0")
    if not len(index):
        raise EmptyIndexError("index is empty")
    if index.embedder is None:
        raise InvalidParameterError("index has no embedder for query encoding")
    queries = [a.query_text() for a in anchors] if anchors else [question]
    best: dict[int, float] = {}
    for vec in index.embedder.embed(queries):
        for row, sim in index.search(vec, top_n):
            if row not in best or sim > best[row]:
                best[row] = sim
    ranked = sorted(best.items(), key=lambda item: (-item[1], item[0]))[:top_n]
    weights = _softmax([s for _, s in ranked], temperature)
    return [RetrievalResult(index.chunks[row], sim, w) for (row, sim), w in zip(ranked, weights)]
