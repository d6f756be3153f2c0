import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from anchor_rag import AnchorRAG, AnchorSelector
from anchor_rag.exceptions import InvalidParameterError
from anchor_rag.index import build_index, load_corpus

from conftest import ambiguity_corpus


def corpus_docs(fixture_files):
    return [json.loads(line) for line in open(fixture_files[0])]


def test_get_params_and_clone():
    est = AnchorRAG(top_n=7, alpha=0.5)
    params = est.get_params()
    assert params["top_n"] == 7 and params["alpha"] == 0.5 and params["mode"] == "anchor-rag"
    c = clone(est)
    assert c.get_params() == params
    c.set_params(mode="naive-rag")
    assert c.mode == "naive-rag" and est.mode == "anchor-rag"


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        AnchorRAG().predict(["q?"])
    with pytest.raises(NotFittedError):
        AnchorSelector().transform(["q?"])


@pytest.mark.parametrize("bad", [{"top_n": 0}, {"temperature": 0}, {"mode": "x"}, {"overlap": 100},
                                 {"k": 1}, {"dimension": 4}, {"template_id": "missing"}, {"ngram_lambdas": (1, 1, 0)}])
def test_param_validation(bad):
    with pytest.raises((InvalidParameterError, KeyError)):
        AnchorRAG(**bad).fit(["some text here"])


def test_rejects_bare_string_input():
    with pytest.raises(InvalidParameterError):
        AnchorRAG().fit("just a string")
    est = AnchorRAG().fit(["Paris is the capital."])
    with pytest.raises(InvalidParameterError):
        est.predict("not a list")


def test_predict_and_score(fixture_files):
    docs = corpus_docs(fixture_files)
    qs = [json.loads(line) for line in open(fixture_files[1])][:8]
    est = AnchorRAG().fit(docs)
    preds = est.predict([q["question"] for q in qs])
    assert isinstance(preds, np.ndarray) and preds.shape == (8,)
    score = est.score([q["question"] for q in qs], [q["answers"] for q in qs])
    assert 0.0 <= score <= 1.0


def test_fit_with_prebuilt_index(fixture_files):
    docs = load_corpus(fixture_files[0])
    idx = build_index(docs)
    q = [json.loads(line) for line in open(fixture_files[1])][0]["question"]
    a = AnchorRAG().fit(docs, index=idx).answer(q)
    b = AnchorRAG().fit(docs).answer(q)
    assert a == b


def test_all_stopword_question_falls_back_to_whole_question():
    est = AnchorRAG().fit(["To be or not to be. That is it."])
    ans = est.answer("to be or not to be")
    assert ans.anchors == () and ans.evidence


def test_empty_question_rejected():
    est = AnchorRAG().fit(["Paris is the capital."])
    with pytest.raises(InvalidParameterError):
        est.answer("?!")


def test_anchor_selector_transform():
    model, question, forced, amb = ambiguity_corpus(4)
    sel = AnchorSelector(m_max=1, predictor=model).fit()
    (anchors,) = sel.transform([question])
    assert [a.token.normalized for a in anchors] == [amb]


def test_anchor_selector_fits_ngram_on_corpus():
    sel = AnchorSelector().fit(["alpha beta gamma. alpha delta gamma."])
    assert sel.predictor_.vocabulary == {"alpha", "beta", "gamma", "delta"}
    tokens, cands, anchors = sel.score_question("alpha beta gamma")
    assert len(cands) == 3 and len(anchors) == 1


def test_no_retrieval_mode_skips_index():
    est = AnchorRAG(mode="no-retrieval").fit(["Paris is the capital."])
    assert est.index_ is None
    with pytest.raises(InvalidParameterError):
        est.answer("capital?", mode="naive-rag")
