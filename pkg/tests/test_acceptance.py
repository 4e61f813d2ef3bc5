"""Acceptance suite: one test per criterion, each printing a PASS line and
enforcing its runtime budget. Everything here is seeded, network-free, and
independent of the optional transformer backend.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they pass.
"""

import math
import random
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from maskboard import artifacts, store
from maskboard.backends import tokenize
from maskboard.classify import classify_corpus, evaluate, train
from maskboard.explain import explain, mask_phrase, segment_phrases
from maskboard.ingest import (
    CohortConfig,
    Corpus,
    LabeledDataset,
    LabeledExample,
    Post,
    SECONDS_PER_DAY,
    balance,
    build_transition_cohort,
    make_dataset,
    split,
)
from maskboard.search import IndexEntry, PhraseIndex, top_matches
from maskboard.stats import compare_theme, fisher_exact, two_proportion_test
from maskboard.report import comparison_tsv
from maskboard.themes import ReviewLog


def _passed(name: str, started: float, budget_s: float) -> None:
    elapsed = time.monotonic() - started
    assert elapsed < budget_s, f"{name}: {elapsed:.1f}s exceeded the {budget_s:.0f}s budget"
    print(f"\nACCEPTANCE {name}: PASS ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# criterion: prevalence-table arithmetic reproduces the published row
# ---------------------------------------------------------------------------

def test_prevalence_table_arithmetic():
    t0 = time.monotonic()
    result = compare_theme("mold", (132, 300), (59, 300))
    tsv = comparison_tsv([result])
    assert "44.0\t19.7" in tsv
    assert abs(result.z - 6.40) < 0.01
    assert result.p_z is not None and result.p_z < 0.01
    assert result.p_fisher < 0.01
    assert result.significant(0.01)
    _passed("prevalence-table arithmetic (44.0 vs 19.7, p < 0.01)", t0, 1.0)


# ---------------------------------------------------------------------------
# criterion: stats oracle (exhaustive Fisher + z vs high-precision CDF)
# ---------------------------------------------------------------------------

def _enumeration_fisher(k1, n1, k2, n2):
    """Full enumeration oracle: factorial-form hypergeometric pmf as exact
    rationals, small-p two-sided rule."""
    m, N, f = k1 + k2, n1 + n2, math.factorial

    def pmf(k):
        return Fraction(f(n1) * f(n2) * f(m) * f(N - m),
                        f(N) * f(k) * f(n1 - k) * f(m - k) * f(n2 - m + k))

    observed = pmf(k1)
    return float(sum(p for k in range(max(0, m - n2), min(n1, m) + 1)
                     if (p := pmf(k)) <= observed))


def test_stats_oracle():
    t0 = time.monotonic()

    # exhaustive sweep; n1,n2 <= 17 covers every table with n1,n2 <= 12
    tables = 0
    max_err = 0.0
    for n1 in range(1, 18):
        for n2 in range(1, 18):
            for k1 in range(n1 + 1):
                for k2 in range(n2 + 1):
                    err = abs(fisher_exact(k1, n1, k2, n2) - _enumeration_fisher(k1, n1, k2, n2))
                    max_err = max(max_err, err)
                    tables += 1
    assert tables == 28900
    assert max_err < 1e-9, f"fisher max error {max_err:g}"

    # z-test p-value vs 50-digit erfc on a 1,000-point random table grid
    import mpmath as mp

    mp.mp.dps = 50
    rng = random.Random(20240817)
    checked = 0
    while checked < 1000:
        n1, n2 = rng.randint(30, 500), rng.randint(30, 500)
        k1, k2 = rng.randint(0, n1), rng.randint(0, n2)
        result = two_proportion_test(k1, n1, k2, n2)
        if result.p_z is None or math.isnan(result.z):
            continue
        pbar = mp.mpf(k1 + k2) / (n1 + n2)
        z = (mp.mpf(k1) / n1 - mp.mpf(k2) / n2) / mp.sqrt(pbar * (1 - pbar) * (mp.mpf(1) / n1 + mp.mpf(1) / n2))
        p_ref = float(mp.erfc(abs(z) / mp.sqrt(2)))
        assert abs(result.p_z - p_ref) < 1e-6, (k1, n1, k2, n2)
        checked += 1

    _passed(f"stats oracle ({tables} exhaustive Fisher tables, 1000-point z grid)", t0, 60.0)


# ---------------------------------------------------------------------------
# criterion: explainer oracle + segmentation round trip
# ---------------------------------------------------------------------------

_FUZZ_ALPHABET = list("abcdefg XYZ0189 .,;:!?…\n\t🙂🤔é漢字  '\"-()") + ["  ", "...", "?!", "\n\n"]


def _fuzz_text(rng: random.Random, max_len: int = 200) -> str:
    return "".join(rng.choice(_FUZZ_ALPHABET) for _ in range(rng.randint(0, max_len)))


def test_explainer_oracle():
    t0 = time.monotonic()

    rng = random.Random(1234)
    for _ in range(10_000):
        text = _fuzz_text(rng)
        phrases = segment_phrases(text)
        assert "".join(p.text + p.separator for p in phrases) == text

    class Stub:
        def __init__(self, fn):
            self.score = fn

    def keyword_stub(text):
        return 0.9 if "panic" in text else 0.1

    weights = {"panic": 0.35, "dread": 0.2, "x": 0.05, "calm": -0.15, "漢": 0.1}

    def additive_stub(text):
        total = 0.5 + sum(weights.get(tok, 0.0) for tok in tokenize(text))
        return min(1.0, max(0.0, total))

    def length_stub(text):
        return (len(text) % 97) / 96.0

    stubs = [Stub(keyword_stub), Stub(additive_stub), Stub(length_stub)]
    word_pool = ["panic", "dread", "calm", "x", "words", "filler", "漢字", "🙂"]
    checked = 0
    for i in range(200):
        parts = [" ".join(rng.choice(word_pool) for _ in range(rng.randint(1, 6)))
                 for _ in range(rng.randint(1, 6))]
        text = ". ".join(parts) + rng.choice([".", "!", "?", ""])
        phrases = segment_phrases(text)
        for stub in stubs:
            exp = explain(stub, text)
            base = stub.score(text)
            for j in range(len(phrases)):
                direct = base - stub.score(mask_phrase(text, phrases, j))
                assert abs(exp.influences[j] - direct) <= 1e-12
                checked += 1
    assert checked > 1000

    _passed("explainer oracle (200 texts x 3 stubs) + 10k round trips", t0, 60.0)


# ---------------------------------------------------------------------------
# criterion: retrieval oracle (exact rank agreement incl. tie-breaks)
# ---------------------------------------------------------------------------

def test_retrieval_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(99)
    pyrng = random.Random(99)

    for trial in range(100):
        dim = int(rng.integers(8, 65))
        size = int(np.exp(rng.uniform(np.log(50), np.log(10_000))))
        vectors = rng.standard_normal((size, dim))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        # plant exact duplicates so tie-breaking is actually exercised
        for _ in range(min(5, size // 2)):
            vectors[pyrng.randrange(size)] = vectors[pyrng.randrange(size)]
        entries = [IndexEntry(f"p{pyrng.randrange(size // 2)}", f"phrase {i:05d}") for i in range(size)]
        index = PhraseIndex("fuzz", "test", dim, entries, vectors)
        q = rng.standard_normal(dim)
        q /= np.linalg.norm(q)

        n = int(rng.integers(1, 301))
        got = top_matches(index, q, n)

        cosines = index.vectors @ q  # same arithmetic; the oracle is the full sort
        order = sorted(range(size), key=lambda i: (-cosines[i], entries[i].post_id, entries[i].phrase))
        expected = [(entries[i].post_id, entries[i].phrase, min(1.0, max(-1.0, float(cosines[i]))))
                    for i in order[:n]]
        assert [(m.post_id, m.phrase, m.cosine) for m in got] == expected, f"trial {trial}"

    _passed("retrieval oracle (100 random indexes, exact rank agreement)", t0, 120.0)


# ---------------------------------------------------------------------------
# criterion: cohort rules (fixture labels + temporal-leakage fuzz)
# ---------------------------------------------------------------------------

def _cfg():
    return CohortConfig(anxiety_forum="anxiety", adhd_forum="adhd",
                        exclusion_window=183 * SECONDS_PER_DAY)


def test_cohort_rules():
    t0 = time.monotonic()
    base = 1_600_000_000

    def post(pid, author, forum, day):
        return Post(pid, author, forum, base + day * SECONDS_PER_DAY, "", f"text {pid}")

    fixture = Corpus("fix", tuple(sorted([
        post("a1", "A", "anxiety", 0), post("a2", "A", "anxiety", 5),
        post("b1", "B", "anxiety", 0), post("b2", "B", "anxiety", 10),
        post("bx", "B", "adhd", 200), post("b3", "B", "anxiety", 250),
        post("c1", "C", "anxiety", 0), post("cx", "C", "adhd", 90),
    ], key=lambda p: (p.created_at, p.id))), {})
    ds = build_transition_cohort(fixture, _cfg())
    assert {e.post_id: e.label for e in ds.examples} == {"a1": 0, "a2": 0, "b1": 1, "b2": 1}

    rng = random.Random(777)
    for trial in range(1000):
        posts = []
        n_authors = rng.randint(1, 6)
        for a in range(n_authors):
            author = f"u{trial}_{a}"
            for j in range(rng.randint(1, 8)):
                forum = rng.choice(["anxiety", "adhd", "other"])
                posts.append(post(f"{author}_{j}", author, forum, rng.randint(0, 800)))
        corpus = Corpus("fuzz", tuple(sorted(posts, key=lambda p: (p.created_at, p.id))), {})
        ds = build_transition_cohort(corpus, _cfg())

        by_id = {p.id: p for p in corpus.posts}
        adhd_times = {}
        for p in corpus.posts:
            if p.forum == "adhd":
                adhd_times.setdefault(p.author, []).append(p.created_at)
        anxiety_first = {}
        for p in corpus.posts:
            if p.forum == "anxiety":
                anxiety_first[p.author] = min(anxiety_first.get(p.author, p.created_at), p.created_at)

        for e in ds.examples:
            src = by_id[e.post_id]
            assert src.forum == "anxiety"  # never an ADHD-forum post
            author = src.author
            if e.label == 1:
                retained = [t for t in adhd_times[author]
                            if t > anxiety_first[author] + 183 * SECONDS_PER_DAY]
                assert retained, "positive author must have a retained ADHD post"
                assert src.created_at < min(retained), "classifier must not see the future"
            else:
                assert author not in adhd_times, "negative author must have zero ADHD posts"

    _passed("cohort rules (fixture labels + 1000 fuzzed histories, no leakage)", t0, 30.0)


# ---------------------------------------------------------------------------
# criterion: end-to-end synthetic pipeline
# ---------------------------------------------------------------------------

MARKERS = (
    "my mind keeps racing all night",
    "another panic spiral at work",
    "i cannot focus on anything lately",
    "a constant sense of dread",
    "everything feels overwhelming now",
)
TOPIC_WORDS = ("worry", "anxious", "restless", "tense", "uneasy", "jittery",
               "overthinking", "insomnia", "nervous", "fearful", "edgy", "unsettled")
NEUTRAL_WORDS = tuple(f"word{i:03d}" for i in range(200))
TOPIC_RATE = {1: 0.22, 0: 0.08}
MARKER_PROB = 0.8
MARKER_TOKENS = frozenset(t for m in MARKERS for t in tokenize(m))


def _generate_corpus(n_posts: int, seed: int):
    """Planted-signal generator. Marker tokens appear nowhere else, so the
    exact Bayes-optimal rule is computable from the generator parameters."""
    assert not (MARKER_TOKENS & set(TOPIC_WORDS)) and not (MARKER_TOKENS & set(NEUTRAL_WORDS))
    rng = random.Random(seed)
    posts, labels, has_marker = [], {}, {}
    for i in range(n_posts):
        y = 1 if i < n_posts // 2 else 0
        sentences = []
        for _ in range(rng.randint(4, 8)):
            tokens = [rng.choice(TOPIC_WORDS) if rng.random() < TOPIC_RATE[y] else rng.choice(NEUTRAL_WORDS)
                      for _ in range(rng.randint(5, 9))]
            sentences.append(" ".join(tokens))
        marked = y == 1 and rng.random() < MARKER_PROB
        if marked:
            sentences.insert(rng.randint(0, len(sentences)), rng.choice(MARKERS))
        pid = f"s{i:04d}"
        posts.append(Post(pid, f"u{i:04d}", "synth", 1_600_000_000 + i, "", ". ".join(sentences) + "."))
        labels[pid] = y
        has_marker[pid] = marked
    ordered = tuple(sorted(posts, key=lambda p: (p.created_at, p.id)))
    return Corpus("synth", ordered, {}), labels, has_marker


def _bayes_optimal_predict(text: str) -> int:
    tokens = tokenize(text)
    if any(t in MARKER_TOKENS for t in tokens):
        return 1  # markers have zero probability under the negative class
    log_lr = math.log(1 - MARKER_PROB)
    for t in tokens:
        if t in TOPIC_WORDS:
            log_lr += math.log(TOPIC_RATE[1] / TOPIC_RATE[0])
        else:
            log_lr += math.log((1 - TOPIC_RATE[1]) / (1 - TOPIC_RATE[0]))
    return 1 if log_lr > 0 else 0


def test_end_to_end_synthetic_pipeline():
    t0 = time.monotonic()
    corpus, labels, _ = _generate_corpus(2000, seed=42)
    dataset = make_dataset(corpus, labels, name="synth")
    train_ds, test_ds = split(dataset, 0.2, seed=11)
    train_bal = balance(train_ds, seed=12)
    test_bal = balance(test_ds, seed=13)
    assert len(test_bal) >= 350  # close to the nominal n = 400

    # the generator itself supports the 0.90 bar: exact Bayes rule
    bayes_acc = sum(1 for e in test_bal.examples
                    if _bayes_optimal_predict(e.text) == e.label) / len(test_bal)
    assert bayes_acc >= 0.90, f"generator Bayes-optimal accuracy {bayes_acc:.3f}"

    classifier = train("linear", train_bal, seed=1)
    metrics = evaluate(classifier, test_bal)
    assert metrics.accuracy >= 0.90, f"balanced-test accuracy {metrics.accuracy:.3f}"

    # explain the posts classified positive; among the true positives the
    # top-k highlights must recover a planted marker phrase
    by_id = {p.id: p for p in corpus.posts}
    test_posts = tuple(by_id[e.post_id] for e in test_bal.examples)
    rows = classify_corpus(classifier, Corpus("test", test_posts, {}), threshold=0.5)
    explained_positive = [r["post_id"] for r in rows if r["predicted"] == 1]
    true_positive = [pid for pid in explained_positive if labels[pid] == 1]
    assert len(true_positive) > 100
    hits = 0
    for pid in true_positive:
        exp = explain(classifier, by_id[pid].text(), post_id=pid, k=5, min_influence=0.0)
        top_texts = {exp.phrases[i].text.strip().lower() for i in exp.highlighted}
        if any(marker in top_texts for marker in MARKERS):
            hits += 1
    marker_rate = hits / len(true_positive)
    assert marker_rate >= 0.80, f"marker highlight rate {marker_rate:.3f}"

    # label-shuffled control: no signal -> chance accuracy
    shuffled = [e.label for e in train_bal.examples]
    random.Random(99).shuffle(shuffled)
    control_ds = LabeledDataset(
        "control",
        tuple(LabeledExample(e.post_id, e.text, y, e.provenance)
              for e, y in zip(train_bal.examples, shuffled)),
        train_bal.authors, {})
    control_acc = evaluate(train("linear", control_ds, seed=1), test_bal).accuracy
    assert 0.43 <= control_acc <= 0.57, f"label-shuffled control accuracy {control_acc:.3f}"

    _passed(
        f"end-to-end pipeline (bayes {bayes_acc:.3f}, acc {metrics.accuracy:.3f}, "
        f"markers {marker_rate:.3f}, control {control_acc:.3f})",
        t0, 180.0)


# ---------------------------------------------------------------------------
# criterion: persistence (round trips, replay, injected crashes)
# ---------------------------------------------------------------------------

class _InjectedCrash(BaseException):
    pass


def test_persistence(tmp_path):
    t0 = time.monotonic()

    # byte-exact round trips across payload kinds
    project = store.init(tmp_path / "rt")
    rng = random.Random(5)
    for kind in store.KINDS:
        for i in range(3):
            files = {f"f{j}.bin": rng.randbytes(rng.randint(1, 4000)) for j in range(rng.randint(1, 3))}
            name = f"{kind}-{i}"
            project.put_tree(kind, name, files)
            assert store.load(project.root).get_tree(kind, name) == files

    # review-log replay reproduces counts from the log alone
    log = ReviewLog(project.reviews_path)
    for i in range(1, 301):
        log.record_review("t1", "lyme", f"p{i}", f"ph{i}", rank=i,
                          verdict="match" if i <= 132 else "non_match")
    log.amend_review("t1", "lyme", "p300", "ph300", verdict="match")
    replayed = ReviewLog(project.reviews_path)
    counts = replayed.theme_counts("t1", "lyme", window=300)
    assert (counts.k, counts.n, counts.partial) == (133, 300, False)

    # 100 injected crashes at random commit points; a fresh load must
    # always verify, with each entry fully old or fully new
    root = tmp_path / "crash"
    crashed = 0
    project = store.init(root)
    project.put_bytes("datasets", "steady", b"untouched baseline")
    crash_rng = random.Random(31337)
    for i in range(100):
        stages = []

        def hook(stage, record=stages):
            record.append(stage)
            if len(record) == target:
                raise _InjectedCrash(stage)

        name = f"entry{i % 7}"
        payload = crash_rng.randbytes(crash_rng.randint(1, 512))
        target = crash_rng.randint(1, 4)
        store._FAULT_HOOK = hook
        try:
            project.put_bytes("datasets", name, payload, replace=True)
        except _InjectedCrash:
            crashed += 1
        finally:
            store._FAULT_HOOK = None
        project = store.load(root)  # reload as a crash recovery would
        project.verify_all()
        assert project.get_bytes("datasets", "steady") == b"untouched baseline"
        if project.has("datasets", name):
            project.get_bytes("datasets", name)  # hash-verified old or new
    assert crashed >= 75  # the hook actually fired for most iterations

    _passed(f"persistence (round trips, replay, {crashed} injected crashes)", t0, 60.0)


# ---------------------------------------------------------------------------
# criterion: the primary suite needs no transformer backend and no network
# ---------------------------------------------------------------------------

def test_runs_without_transformer_or_network(monkeypatch):
    t0 = time.monotonic()

    code = """
import sys
import maskboard, maskboard.cli, maskboard.service, maskboard.classify, maskboard.search
banned = [m for m in ("torch", "transformers", "tensorflow") if m in sys.modules]
sys.exit(1 if banned else 0)
"""
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True)
    assert proc.returncode == 0, "importing the package must not pull the optional transformer stack"

    monkeypatch.delenv("MASKBOARD_ENABLE_TRANSFORMER", raising=False)
    from maskboard.backends import make_backend
    from maskboard.errors import BackendUnavailable

    with pytest.raises(BackendUnavailable):
        make_backend("transformer")

    # the deterministic provider never leaves the process
    from maskboard.embed import provider_from_spec

    provider = provider_from_spec("test-8")
    assert provider.embed_batch(["offline"])[0].shape == (8,)

    _passed("primary suite independent of transformer backend and network", t0, 30.0)
