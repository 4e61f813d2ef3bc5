import json

import pytest

from maskboard.ingest import Corpus, LabeledDataset, LabeledExample, Post

BASE_TS = 1_600_000_000
DAY = 86400


def at_day(n):
    return BASE_TS + n * DAY


def make_post(pid, author="u1", forum="anxiety", day=0, title="", body="hello world"):
    return Post(id=pid, author=author, forum=forum, created_at=at_day(day), title=title, body=body)


def make_corpus(posts, name="fixture"):
    ordered = tuple(sorted(posts, key=lambda p: (p.created_at, p.id)))
    return Corpus(name=name, posts=ordered, manifest={"source": "test"})


def make_examples(pairs, provenance="manual", name="fixture-ds"):
    """pairs: list of (text, label) or (post_id, text, label, author)."""
    examples = []
    authors = {}
    for i, item in enumerate(pairs):
        if len(item) == 2:
            text, label = item
            pid, author = f"p{i}", f"a{i}"
        else:
            pid, text, label, author = item
        examples.append(LabeledExample(pid, text, int(label), provenance))
        authors[pid] = author
    return LabeledDataset(name=name, examples=tuple(examples), authors=authors, manifest={})


def record_line(pid, author="u1", sub="anxiety", created=BASE_TS, title="t", body="b"):
    return json.dumps({"id": pid, "author": author, "subreddit": sub,
                       "created_utc": created, "title": title, "selftext": body})


class StubClassifier:
    """score = fn(text); quacks like a TrainedClassifier for pipeline ops."""

    def __init__(self, fn, backend_id="stub"):
        self.fn = fn
        self.backend_id = backend_id

    def score(self, text):
        return self.fn(text)

    def score_batch(self, texts):
        return [self.fn(t) for t in texts]

    def model_hash(self):
        return "stub"


@pytest.fixture
def panic_stub():
    return StubClassifier(lambda t: 0.9 if "panic" in t else 0.1)


@pytest.fixture
def nb_fixture_dataset():
    return make_examples([("panic attack", 1), ("panic fear", 1), ("sunny day", 0), ("nice day", 0)])
