from hypothesis import given, strategies as st

from anchor_rag.text import load_stopwords, normalize_answer, sentence_split, tokenize


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_marks_stopwords():
    toks = tokenize("The apple fell.")
    assert [(t.surface, t.position, t.is_stopword) for t in toks] == [
        ("The", 0, True), ("apple", 1, False), ("fell", 2, False)]


def test_tokenize_drops_punctuation():
    toks = tokenize("Who founded Apple Inc.?")
    assert [t.normalized for t in toks] == ["who", "founded", "apple", "inc"]
    assert [t.is_stopword for t in toks] == [True, False, False, False]


def test_tokenize_nfc():
    decomposed = "café"
    assert tokenize(decomposed)[0].normalized == "café"


def test_offsets_point_into_text():
    text = "Hello, world!"
    for t in tokenize(text):
        assert text[t.start : t.end] == t.surface


def test_stopword_list_shape():
    words = load_stopwords()
    assert 100 <= len(words) <= 150
    assert all(w == w.lower() for w in words)
    assert {"to", "be", "or", "not", "the", "of"} <= words
    assert not {"year", "founded", "apple"} & words


def test_normalize_answer_examples():
    assert normalize_answer("The Eiffel Tower") == "eiffel tower"
    assert normalize_answer("Paris.") == "paris"
    assert normalize_answer("A  an the") == ""


def test_sentence_split_examples():
    assert sentence_split("A. B? C!") == ["A.", "B?", "C!"]
    assert sentence_split("") == []
    assert sentence_split("No terminal punctuation") == ["No terminal punctuation"]
    assert sentence_split("Dr.Who is here. Yes") == ["Dr.Who is here.", "Yes"]


text_st = st.text(st.characters(blacklist_categories=("Cs",)), max_size=60)


@given(text_st)
def test_normalize_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


@given(text_st)
def test_tokenize_rejoin_idempotent(s):
    toks = tokenize(s)
    assert all(t.normalized for t in toks)
    assert [t.position for t in toks] == list(range(len(toks)))
    rejoined = " ".join(t.normalized for t in toks)
    assert sorted(t.normalized for t in tokenize(rejoined)) == sorted(t.normalized for t in toks)
