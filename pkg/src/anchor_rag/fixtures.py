"""Seeded synthetic corpus and QA set for desk-scale end-to-end runs.

Every document states when and where one fictional organisation was
founded, surrounded by filler sentences that share vocabulary across
documents. Each question asks for one organisation's founding year; its
gold answers (the year and the full fact sentence) occur verbatim in
exactly one document.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .exceptions import InvalidParameterError

_SYLLABLES = [
    "zor", "blax", "qui", "ven", "tal", "mor", "dex", "ari", "lun", "pex", "kav", "rin",
    "sol", "tharn", "vel", "gro", "nim", "obi", "yur", "cal", "fen", "jax", "ulm", "ziv",
]
_SUFFIXES = ["Labs", "Industries", "Group", "Systems", "Works", "Holdings", "Partners", "Foundry"]
_CITIES = [
    "Lyon", "Porto", "Leeds", "Graz", "Turku", "Bergen", "Ghent", "Brno", "Malmo", "Cork",
    "Aarhus", "Utrecht", "Basel", "Split", "Tartu", "Krakow", "Bilbao", "Genoa", "Nantes", "Oulu",
]
_PRODUCTS = ["sensors", "textiles", "software", "bicycles", "lenses", "turbines", "furniture", "chemicals"]
_MARKETS = ["regional", "industrial", "medical", "retail", "naval", "academic"]
_ADJECTIVES = ["stable", "ambitious", "quiet", "innovative", "cautious", "profitable", "modest"]
_FILLERS = [
    "The company builds {product} for {market} customers.",
    "Its main office sits near the old harbour of {city}.",
    "Analysts describe the firm as {adj} and {adj2}.",
    "Staff members often travel to {city} for trade fairs.",
    "Demand for its {product} grew during the last decade.",
    "The board meets every spring to review {market} contracts.",
]
YEAR_RANGE = (1000, 2024)


def _entity_names(rng: random.Random, n: int) -> list[str]:
    names: set[str] = set()
    out = []
    while len(out) < n:
        stem = "".join(rng.choice(_SYLLABLES) for _ in range(3)).capitalize()
        if stem in names:
            continue
        names.add(stem)
        out.append(f"{stem} {rng.choice(_SUFFIXES)}")
    return out


def generate_fixtures(seed: int = 0, n_docs: int = 200, n_questions: int = 50) -> tuple[list[dict], list[dict]]:
    """Return ``(corpus records, QA records)``."""
    if n_docs < 1 or n_questions < 1:
        raise InvalidParameterError("n_docs and n_questions must be >= 1")
    if n_questions > n_docs:
        raise InvalidParameterError("n_questions cannot exceed n_docs")
    if n_docs > YEAR_RANGE[1] - YEAR_RANGE[0]:
        raise InvalidParameterError(f"at most {YEAR_RANGE[1] - YEAR_RANGE[0]} documents supported")
    rng = random.Random(seed)
    entities = _entity_names(rng, n_docs)
    years = rng.sample(range(*YEAR_RANGE), n_docs)
    docs, facts = [], []
    for i, (entity, year) in enumerate(zip(entities, years)):
        fact = f"{entity} was founded in {year} in {rng.choice(_CITIES)}."
        adj, adj2 = rng.sample(_ADJECTIVES, 2)
        fillers = [
            t.format(product=rng.choice(_PRODUCTS), market=rng.choice(_MARKETS), city=rng.choice(_CITIES),
                     adj=adj, adj2=adj2)
            for t in rng.sample(_FILLERS, rng.randint(2, 4))
        ]
        sentences = list(fillers)
        sentences.insert(rng.randint(0, len(fillers)), fact)
        docs.append({"id": f"doc-{i:04d}", "title": entity, "text": " ".join(sentences)})
        facts.append((entity, year, fact))
    picked = sorted(rng.sample(range(n_docs), n_questions))
    questions = []
    for qi, di in enumerate(picked):
        entity, year, fact = facts[di]
        questions.append({
            "id": f"q-{qi:03d}",
            "question": f"{entity} was founded in what year?",
            "answers": [str(year), fact],
        })
    check_unique_support(docs, questions)
    return docs, questions


def check_unique_support(docs: list[dict], questions: list[dict]) -> None:
    for q in questions:
        for gold in q["answers"]:
            hits = sum(gold in d["text"] for d in docs)
            if hits != 1:
                raise AssertionError(f"answer {gold!r} of {q['id']} occurs in {hits} documents")


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def write_fixtures(out_dir, seed: int = 0, n_docs: int = 200, n_questions: int = 50) -> tuple[Path, Path]:
    docs, questions = generate_fixtures(seed, n_docs, n_questions)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_path, dataset_path = out / "corpus.jsonl", out / "dataset.jsonl"
    _write_jsonl(corpus_path, docs)
    _write_jsonl(dataset_path, questions)
    return corpus_path, dataset_path
