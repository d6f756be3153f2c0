import json
import random

import httpx
import pytest

from anchor_rag.predict import ngram_train

STOP_CONTEXTS = ["to", "of", "in", "at", "by", "for", "on", "from", "with", "into"]


def nonsense_word(rng: random.Random) -> str:
    return "".join(rng.choice("bcdfghklmnprstvz") + rng.choice("aeiou") for _ in range(3))


def ambiguity_corpus(seed: int, lambdas=(1.0, 0.0, 0.0)):
    """Corpus + question with one context-forced and one four-way ambiguous token.

    Returns ``(model, question, forced_word, ambiguous_word)``. Under the
    trigram-only weights the forced token has entropy 0 and the ambiguous
    token exactly ln 4.
    """
    rng = random.Random(seed)
    words = set()
    while len(words) < 5 + 6:
        words.add(nonsense_word(rng))
    words = sorted(words)
    rng.shuffle(words)
    forced, alternatives, noise = words[0], words[1:5], words[5:]
    s1, s2, s3, s4 = rng.sample(STOP_CONTEXTS, 4)
    reps = rng.randint(1, 4)
    sentences = [f"{s1} {forced} {s2}."] * reps
    for alt in alternatives:
        sentences += [f"{s3} {alt} {s4}."] * reps
    sentences += [f"{rng.choice(noise)} {rng.choice(noise)} {rng.choice(noise)}." for _ in range(rng.randint(0, 5))]
    rng.shuffle(sentences)
    amb = rng.choice(alternatives)
    if rng.random() < 0.5:
        question = f"{s1} {forced} {s2} {s3} {amb} {s4}"
    else:
        question = f"{s3} {amb} {s4} {s1} {forced} {s2}"
    model = ngram_train([" ".join(sentences)], lambdas)
    return model, question, forced, amb


class ScriptedServer:
    """httpx transport replaying a fixed list of responses and logging requests."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        if not self.responses:
            return httpx.Response(500, json={"error": "script exhausted"})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        status, body = item
        if isinstance(body, (dict, list)):
            return httpx.Response(status, json=body)
        return httpx.Response(status, content=body)

    @property
    def transport(self):
        return httpx.MockTransport(self)

    def bodies(self):
        return [json.loads(r.content) for r in self.requests]


@pytest.fixture
def scripted_server():
    return ScriptedServer


@pytest.fixture(scope="session")
def fixture_files(tmp_path_factory):
    from anchor_rag.fixtures import write_fixtures

    out = tmp_path_factory.mktemp("fixtures")
    return write_fixtures(out, seed=0)


ACCEPTANCE_LINES: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    line = f"criterion {number} {status}: {title}"
    ACCEPTANCE_LINES.append(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
