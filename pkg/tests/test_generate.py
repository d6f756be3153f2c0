import math
import random

import pytest

from anchor_rag.anchor import Anchor
from anchor_rag.exceptions import EmptyGenerationError, PromptBudgetError, UnknownTemplateError
from anchor_rag.generate import (
    END_MARKER,
    ExtractiveBackend,
    GenerationResult,
    Prompt,
    ScriptedBackend,
    assemble_prompt,
    extractive_stub_generate,
    generate,
    marginalize,
    marginalize_all,
    prompt_length,
    sequence_prob,
)
from anchor_rag.index import Chunk, RetrievalResult
from anchor_rag.text import tokenize


def rr(cid, text, weight, sim=0.5):
    return RetrievalResult(Chunk(cid.split("#")[0], cid, text, (0, 1)), sim, weight)


def anchor(word, pos=0):
    return Anchor(pos, tokenize(word)[0], 1.0, ())


def test_prompt_header_and_question_only():
    text = assemble_prompt("Who?").render()
    assert text.startswith("Answer the question")
    assert "Anchors:" not in text and "[" not in text
    assert text.rstrip().endswith("Question: Who?\nAnswer:")


def test_prompt_orders_passages_by_weight():
    p = assemble_prompt("q", [], [rr("b#0", "low", 0.3), rr("a#0", "high", 0.7)])
    assert [x.weight for x in p.passages] == [0.7, 0.3]
    text = p.render()
    assert text.index("[a#0] high") < text.index("[b#0] low")


def test_prompt_lists_anchors():
    p = assemble_prompt("q", [anchor("capital", 3), anchor("Paris", 1)])
    assert "Anchors: Paris, capital\n" in p.render()


def test_prompt_budget_drops_lightest_first():
    heavy = rr("a#0", " ".join(["x"] * 10), 0.6)
    light = rr("b#0", " ".join(["y"] * 10), 0.4)
    full = assemble_prompt("q", [], [heavy, light], budget=10_000)
    budget = prompt_length(full.render()) - 5  # one drop of the 11-token light passage suffices
    p = assemble_prompt("q", [], [heavy, light], budget=budget)
    assert [x.chunk_id for x in p.passages] == ["a#0"]
    assert prompt_length(p.render()) <= budget
    with pytest.raises(PromptBudgetError):
        assemble_prompt("q", [], [heavy], budget=3)


def test_unknown_template():
    with pytest.raises(UnknownTemplateError):
        assemble_prompt("q", template_id="nope")
    with pytest.raises(UnknownTemplateError):
        assemble_prompt("q", template_id="../stopwords")


def test_generate_scripted_records_steps():
    backend = ScriptedBackend({None: [("a", 0.5), ("b", 0.4)]})
    res = generate(backend, Prompt("q"), max_tokens=10)
    assert res.steps == (("a", 0.5), ("b", 0.4))
    assert res.text == "a b"
    assert res.log_prob == pytest.approx(math.log(0.2), abs=1e-12)
    assert sequence_prob(res) == pytest.approx(0.2, abs=1e-12)


def test_generate_greedy_picks_argmax():
    backend = ScriptedBackend({None: [{"x": 0.2, "y": 0.7, "z": 0.1}, {"b": 0.5, "a": 0.5}, {END_MARKER: 0.9, "q": 0.1}]})
    res = generate(backend, Prompt("q"))
    assert res.steps == (("y", 0.7), ("a", 0.5))


def test_generate_max_tokens():
    backend = ScriptedBackend({None: [("a", 0.5), ("b", 0.4)]})
    assert len(generate(backend, Prompt("q"), max_tokens=1).steps) == 1
    res = generate(ExtractiveBackend(), assemble_prompt("q", [], [rr("a#0", "one two three.", 1.0)]), 2)
    assert res.text == "one two"


def test_generate_empty():
    with pytest.raises(EmptyGenerationError):
        generate(ScriptedBackend({}), Prompt("q"))


def test_generate_deterministic():
    p = assemble_prompt("q", [anchor("capital")], [rr("a#0", "Paris is the capital. It is large.", 1.0)])
    assert generate(ExtractiveBackend(), p) == generate(ExtractiveBackend(), p)


def test_sequence_prob_cases():
    assert sequence_prob(GenerationResult.from_steps([])) == 1.0
    assert sequence_prob(GenerationResult.from_steps([("a", 0.5), ("b", 0.4)])) == pytest.approx(0.2)
    assert sequence_prob(GenerationResult.from_steps([("a", 1.0), ("b", 0.3), ("c", 1.0)])) == 0.3


def test_generation_result_rejects_bad_probs():
    with pytest.raises(ValueError):
        GenerationResult.from_steps([("a", 0.0)])
    with pytest.raises(ValueError):
        GenerationResult.from_steps([("a", 1.5)])


def test_log_prob_consistency_random():
    rng = random.Random(0)
    for _ in range(50):
        steps = [(f"t{i}", rng.uniform(0.01, 1.0)) for i in range(rng.randint(0, 12))]
        res = generate(ScriptedBackend({None: steps}), Prompt("q")) if steps else GenerationResult.from_steps([])
        assert math.log(sequence_prob(res)) == pytest.approx(res.log_prob, abs=1e-9)


def test_stub_picks_anchor_sentence():
    p = assemble_prompt("q", [anchor("capital")], [rr("a#0", "Paris is the capital. It is large.", 1.0)])
    res = extractive_stub_generate(p)
    assert res.text == "Paris is the capital."
    assert all(prob == 1.0 for _, prob in res.steps)
    assert res.log_prob == 0.0


def test_stub_no_passages():
    with pytest.raises(EmptyGenerationError):
        extractive_stub_generate(Prompt("q"))


def test_stub_tie_goes_to_earlier_sentence():
    p = assemble_prompt("q", [anchor("river")], [rr("a#0", "No match here. The river is wide. A river runs.", 1.0)])
    assert extractive_stub_generate(p).text == "The river is wide."


def test_stub_falls_back_to_first_sentence_of_top_passage():
    p = assemble_prompt("q", [anchor("zebra")], [rr("b#0", "Low one. Low two.", 0.2), rr("a#0", "Top one. Top two.", 0.8)])
    assert extractive_stub_generate(p).text == "Top one."


def test_stub_earlier_passage_wins_tie():
    p = assemble_prompt("q", [anchor("river")], [rr("b#0", "Second river.", 0.2), rr("a#0", "First river.", 0.8)])
    assert extractive_stub_generate(p).text == "First river."


def per_chunk_backend(answers):
    return ScriptedBackend({cid: [(w, p if i == 0 else 1.0) for i, w in enumerate(text.split())]
                            for cid, (text, p) in answers.items()})


def test_marginalize_two_docs_same_answer():
    backend = per_chunk_backend({"a#0": ("paris", 0.5), "b#0": ("Paris.", 0.2)})
    best = marginalize("q", [], [rr("a#0", "x", 0.7), rr("b#0", "y", 0.3)], backend)
    # 0.7 * 0.5 + 0.3 * 0.2
    assert best.marginal_prob == pytest.approx(0.41, abs=1e-12)
    assert best.normalized == "paris"
    assert [cid for cid, _ in best.per_doc] == ["a#0", "b#0"]


def test_marginalize_singleton():
    backend = per_chunk_backend({"a#0": ("rome", 0.37)})
    assert marginalize("q", [], [rr("a#0", "x", 1.0)], backend).marginal_prob == pytest.approx(0.37)


def test_marginalize_lexicographic_tie():
    backend = per_chunk_backend({"a#0": ("b", 0.9), "b#0": ("a", 0.9)})
    best = marginalize("q", [], [rr("a#0", "x", 0.5), rr("b#0", "y", 0.5)], backend)
    assert best.answer == "a"
    assert best.marginal_prob == pytest.approx(0.45)


def test_marginalize_mass_conservation_and_concentration():
    rng = random.Random(1)
    for _ in range(20):
        n = rng.randint(1, 6)
        raw = [rng.random() for _ in range(n)]
        weights = [w / sum(raw) for w in raw]
        answers = {f"c{i}#0": (rng.choice(["x", "y", "z"]), rng.uniform(0.05, 1)) for i in range(n)}
        retrieved = [rr(f"c{i}#0", "t", w) for i, w in enumerate(weights)]
        cands = marginalize_all("q", [], retrieved, per_chunk_backend(answers))
        total = sum(w * answers[f"c{i}#0"][1] for i, w in enumerate(weights))
        assert math.fsum(c.marginal_prob for c in cands) == pytest.approx(total, abs=1e-9)
    answers = {"a#0": ("alone", 0.01), "b#0": ("other", 1.0)}
    best = marginalize("q", [], [rr("a#0", "t", 1 - 1e-10), rr("b#0", "t", 1e-10)], per_chunk_backend(answers))
    assert best.answer == "alone"


def test_marginalize_parallel_matches_serial():
    answers = {f"c{i}#0": (["x", "y"][i % 2], 0.1 + i / 10) for i in range(6)}
    retrieved = [rr(cid, "t", 1 / 6) for cid in answers]
    backend = per_chunk_backend(answers)
    assert marginalize_all("q", [], retrieved, backend, n_jobs=4) == marginalize_all("q", [], retrieved, backend)


def test_marginalize_skips_empty_and_fails_when_all_empty():
    backend = per_chunk_backend({"a#0": ("yes", 0.5)})
    best = marginalize("q", [], [rr("a#0", "x", 0.5), rr("zz#0", "y", 0.5)], backend)
    assert best.per_doc == (("a#0", 0.5),)
    with pytest.raises(EmptyGenerationError):
        marginalize("q", [], [rr("zz#0", "y", 1.0)], backend)


def test_prob_free_results_rank_by_weight():
    class ProbFree:
        def complete(self, prompt, max_tokens):
            word = "left" if prompt.passages[0].chunk_id == "a#0" else "right"
            return GenerationResult.from_steps([(word, 1.0)], prob_free=True)

    best = marginalize("q", [], [rr("a#0", "x", 0.4), rr("b#0", "y", 0.6)], ProbFree())
    assert best.answer == "right" and best.marginal_prob == pytest.approx(0.6)
