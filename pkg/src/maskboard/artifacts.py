"""Serialization glue between domain objects and the project store."""

from __future__ import annotations

import json

from .classify import TrainedClassifier
from .errors import NotFoundError
from .explain import Explanation, explanation_from_record, explanations_to_jsonl
from .ingest import Corpus, LabeledDataset, dataset_from_jsonl, dataset_to_jsonl, load_posts, serialize_posts
from .search import PhraseIndex, index_from_bytes, index_to_bytes
from .store import Project
from .themes import Theme

RECORDS = "records.jsonl"
SIDECAR = "manifest.json"


def _sidecar(manifest: dict) -> bytes:
    return json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2).encode("utf-8")


def save_corpus(project: Project, corpus: Corpus, replace: bool = False) -> str:
    files = {
        RECORDS: serialize_posts(corpus).encode("utf-8"),
        SIDECAR: _sidecar({"name": corpus.name, **corpus.manifest}),
    }
    meta = {"posts": len(corpus.posts), **{k: v for k, v in corpus.manifest.items() if isinstance(v, (str, int, float))}}
    return project.put_tree("corpora", corpus.name, files, meta=meta, replace=replace)


def load_corpus(project: Project, name: str) -> Corpus:
    files = project.get_tree("corpora", name)
    manifest = json.loads(files[SIDECAR].decode("utf-8"))
    # \n-delimited records; bodies may contain NEL/LS/PS so splitlines() is wrong here
    corpus = load_posts(files[RECORDS].decode("utf-8").split("\n"), name=name)
    return Corpus(name=name, posts=corpus.posts, manifest=manifest)


def save_dataset(project: Project, dataset: LabeledDataset, replace: bool = False) -> str:
    pos, neg = dataset.class_counts()
    sidecar = {
        "name": dataset.name,
        "counts": {"examples": len(dataset.examples), "positive": pos, "negative": neg},
        "tool_version": project.manifest.get("tool_version", ""),
        **dataset.manifest,
    }
    files = {
        RECORDS: dataset_to_jsonl(dataset).encode("utf-8"),
        SIDECAR: _sidecar(sidecar),
    }
    meta = {"examples": len(dataset.examples), "positive": pos, "negative": neg,
            "source_corpus": dataset.manifest.get("source_corpus", "")}
    return project.put_tree("datasets", dataset.name, files, meta=meta, replace=replace)


def load_dataset(project: Project, name: str) -> LabeledDataset:
    files = project.get_tree("datasets", name)
    manifest = json.loads(files[SIDECAR].decode("utf-8"))
    corpus = None
    source = manifest.get("source_corpus")
    if source and project.has("corpora", source):
        corpus = load_corpus(project, source)
    return dataset_from_jsonl(files[RECORDS].decode("utf-8"), name=name, manifest=manifest, corpus=corpus)


def save_model(project: Project, name: str, classifier: TrainedClassifier, replace: bool = False) -> str:
    meta = {"backend_id": classifier.backend_id, "dataset": classifier.manifest.get("dataset", ""),
            "seed": classifier.manifest.get("seed")}
    return project.put_tree("models", name, classifier.save_tree(), meta=meta, replace=replace)


def load_model(project: Project, name: str) -> TrainedClassifier:
    return TrainedClassifier.load_tree(project.get_tree("models", name))


def save_explanations(project: Project, name: str, explanations: list[Explanation],
                      corpus_name: str, model_name: str, policy: dict, replace: bool = False) -> str:
    files = {
        RECORDS: explanations_to_jsonl(explanations).encode("utf-8"),
        SIDECAR: _sidecar({"name": name, "corpus": corpus_name, "model": model_name, "policy": policy}),
    }
    meta = {"corpus": corpus_name, "model": model_name, "explanations": len(explanations)}
    return project.put_tree("explanations", name, files, meta=meta, replace=replace)


def load_explanation_records(project: Project, name: str) -> tuple[list[dict], dict]:
    files = project.get_tree("explanations", name)
    manifest = json.loads(files[SIDECAR].decode("utf-8"))
    records = [json.loads(line) for line in files[RECORDS].decode("utf-8").split("\n") if line.strip()]
    return records, manifest


def load_explanations(project: Project, name: str) -> tuple[list[Explanation], dict]:
    """Rebuild full Explanation objects against their source corpus."""
    records, manifest = load_explanation_records(project, name)
    corpus = load_corpus(project, manifest["corpus"])
    by_id = {p.id: p for p in corpus.posts}
    delimiters = manifest.get("policy", {}).get("delimiters")
    out = []
    for rec in records:
        post = by_id.get(rec["post_id"])
        if post is None:
            raise NotFoundError(f"explanation set {name!r} references missing post {rec['post_id']!r}")
        kwargs = {"delimiters": delimiters} if delimiters else {}
        out.append(explanation_from_record(rec, post.text(), **kwargs))
    return out, manifest


def explanation_sets_for_corpus(project: Project, corpus_name: str) -> list[str]:
    return [n for n in project.list_entries("explanations") if project.meta("explanations", n).get("corpus") == corpus_name]


def save_index(project: Project, name: str, index: PhraseIndex, replace: bool = False) -> str:
    files = {
        "index.bin": index_to_bytes(index),
        SIDECAR: _sidecar({
            "name": name, "corpus": index.corpus, "provider_id": index.provider_id,
            "dimension": index.dimension, "entries": len(index.entries),
        }),
    }
    meta = {"corpus": index.corpus, "provider_id": index.provider_id,
            "dimension": index.dimension, "entries": len(index.entries)}
    return project.put_tree("indexes", name, files, meta=meta, replace=replace)


def load_index(project: Project, name: str) -> PhraseIndex:
    return index_from_bytes(project.get_tree("indexes", name)["index.bin"])


def index_for_corpus(project: Project, corpus_name: str) -> PhraseIndex:
    for name in project.list_entries("indexes"):
        if project.meta("indexes", name).get("corpus") == corpus_name:
            return load_index(project, name)
    raise NotFoundError(f"no index built for corpus {corpus_name!r}")


def save_theme(project: Project, theme: Theme, replace: bool = True) -> str:
    meta = {"name": theme.name, "members": len(theme.members)}
    return project.put_tree("themes", theme.theme_id, {"theme.json": theme.to_json()}, meta=meta, replace=replace)


def load_theme(project: Project, theme_id: str) -> Theme:
    return Theme.from_json(project.get_tree("themes", theme_id)["theme.json"])


def find_theme(project: Project, ref: str) -> Theme:
    """Look a theme up by id, falling back to its unique name."""
    if project.has("themes", ref):
        return load_theme(project, ref)
    hits = [t for t in project.list_entries("themes") if project.meta("themes", t).get("name") == ref]
    if len(hits) == 1:
        return load_theme(project, hits[0])
    if not hits:
        raise NotFoundError(f"no theme {ref!r}")
    raise NotFoundError(f"theme name {ref!r} is ambiguous: {hits}")
