import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskboard import artifacts, store
from maskboard.errors import ConflictError, IntegrityError, InvalidInput, NotFoundError
from maskboard.themes import ReviewLog

from conftest import make_corpus, make_post


@pytest.fixture
def project(tmp_path):
    return store.init(tmp_path / "proj", name="test-project")


def test_init_creates_layout(project):
    for kind in store.KINDS:
        assert (project.root / kind).is_dir()
    assert (project.root / store.MANIFEST).is_file()
    assert project.manifest["name"] == "test-project"


def test_init_rejects_non_empty_dir(tmp_path):
    target = tmp_path / "occupied"
    target.mkdir()
    (target / "junk.txt").write_text("x")
    with pytest.raises(InvalidInput):
        store.init(target)


def test_put_get_round_trip_corpus(project):
    corpus = make_corpus([make_post("p1", body="aaa"), make_post("p2", body="bbb"), make_post("p3", body="ccc")])
    artifacts.save_corpus(project, corpus)
    loaded = artifacts.load_corpus(project, corpus.name)
    assert loaded.posts == corpus.posts


def test_round_trip_with_unicode_line_separators(project):
    # NEL/LS/PS inside bodies must not act as record boundaries on reload
    from maskboard.ingest import Post, Corpus, make_dataset

    weird = Post("w1", "u", "anxiety", 5, "", "one\x85two three four")
    corpus = Corpus("weird", (weird,), {})
    artifacts.save_corpus(project, corpus)
    assert artifacts.load_corpus(project, "weird").posts == corpus.posts
    ds = make_dataset(corpus, {"w1": 1})
    artifacts.save_dataset(project, ds)
    assert artifacts.load_dataset(project, ds.name).examples == ds.examples


def test_put_get_round_trip_bytes(project):
    payload = b"\x00\x01binary\xffstuff"
    project.put_bytes("datasets", "blob", payload)
    assert store.load(project.root).get_bytes("datasets", "blob") == payload


def test_tamper_detection_names_file(project):
    project.put_bytes("datasets", "victim", b"original payload")
    entry = project.manifest["entries"]["datasets"]["victim"]
    target = project.root / entry["path"] / "data"
    data = bytearray(target.read_bytes())
    data[0] ^= 0xFF
    target.write_bytes(bytes(data))
    fresh = store.load(project.root)
    with pytest.raises(IntegrityError) as err:
        fresh.get_bytes("datasets", "victim")
    assert entry["path"] in str(err.value)


def test_conflict_on_different_content(project):
    project.put_bytes("themes", "t", b"one")
    project.put_bytes("themes", "t", b"one")  # identical put is a no-op
    with pytest.raises(ConflictError):
        project.put_bytes("themes", "t", b"two")
    project.put_bytes("themes", "t", b"two", replace=True)
    assert project.get_bytes("themes", "t") == b"two"


def test_unknown_kind_rejected(project):
    with pytest.raises(InvalidInput):
        project.put_bytes("wrong_kind", "x", b"data")


def test_get_missing_entry(project):
    with pytest.raises(NotFoundError):
        project.get_tree("models", "ghost")


def test_delete_entry(project):
    project.put_bytes("themes", "gone", b"x")
    project.delete_entry("themes", "gone")
    assert not project.has("themes", "gone")
    with pytest.raises(NotFoundError):
        project.delete_entry("themes", "gone")


def test_load_never_mutates(project):
    project.put_bytes("datasets", "d", b"payload")
    before = (project.root / store.MANIFEST).read_bytes()
    store.load(project.root).get_bytes("datasets", "d")
    assert (project.root / store.MANIFEST).read_bytes() == before


def test_replay_reviews_two_reviews_one_amend(project):
    log = ReviewLog(project.reviews_path)
    log.record_review("t1", "c", "p1", "a", rank=1, verdict="match")
    log.record_review("t1", "c", "p2", "b", rank=2, verdict="unsure")
    log.amend_review("t1", "c", "p2", "b", verdict="match")
    state = project.replay_reviews()
    assert state.final[("t1", "c", "p2", "b")].verdict == "match"
    assert len(state.audit[("t1", "c", "p2", "b")]) == 2
    assert len(state.final) == 2


@settings(max_examples=30)
@given(st.dictionaries(
    st.text(alphabet="abcdefgh", min_size=1, max_size=8),
    st.binary(max_size=200),
    min_size=1, max_size=4,
))
def test_round_trip_fuzz(tmp_path_factory, files):
    project = store.init(tmp_path_factory.mktemp("fuzz") / "p")
    digest = project.put_tree("explanations", "fuzzed", files)
    assert store.load(project.root).get_tree("explanations", "fuzzed") == files
    assert store.tree_hash(files) == digest


class Crash(BaseException):
    pass


def test_injected_crash_leaves_no_corrupt_entry(tmp_path):
    # one deterministic crash at each commit stage; the full 100-crash
    # sweep lives in the acceptance suite
    stages = ["payload_write:data", "payload_rename", "registry_write", "registry_rename"]
    for stage in stages:
        root = tmp_path / f"crash-{stage.replace(':', '_')}"
        project = store.init(root)
        project.put_bytes("datasets", "safe", b"pre-existing")

        def boom(s, stage=stage):
            if s == stage:
                raise Crash(stage)

        store._FAULT_HOOK = boom
        try:
            with pytest.raises(Crash):
                project.put_bytes("datasets", "incoming", b"new payload")
        finally:
            store._FAULT_HOOK = None
        fresh = store.load(root)
        fresh.verify_all()  # every registered entry still hashes clean
        assert fresh.get_bytes("datasets", "safe") == b"pre-existing"


def test_crash_during_replace_keeps_old_or_new(tmp_path):
    root = tmp_path / "replace-crash"
    project = store.init(root)
    project.put_bytes("datasets", "d", b"version one")

    def boom(stage):
        if stage == "registry_write":
            raise Crash(stage)

    store._FAULT_HOOK = boom
    try:
        with pytest.raises(Crash):
            project.put_bytes("datasets", "d", b"version two", replace=True)
    finally:
        store._FAULT_HOOK = None
    fresh = store.load(root)
    fresh.verify_all()
    assert fresh.get_bytes("datasets", "d") == b"version one"
