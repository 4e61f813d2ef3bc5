"""Training, evaluation, bulk classification, and dataset expansion.

A trained model is a backend plus a training manifest (backend id,
hyperparameters, dataset hash, seed). The model artifact on disk is a
directory: manifest.json + an opaque state blob.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import __version__
from .backends import ClassifierBackend, make_backend
from .errors import InvalidInput
from .ingest import Corpus, LabeledDataset

MANIFEST_FILE = "manifest.json"
STATE_FILE = "state.bin"


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    n: int
    confusion: dict  # {"tp", "fp", "fn", "tn"}

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n": self.n,
            "confusion": dict(self.confusion),
        }


@dataclass
class TrainedClassifier:
    backend: ClassifierBackend
    manifest: dict = field(default_factory=dict)

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def score(self, text: str) -> float:
        return self.backend.score(text)

    def score_batch(self, texts) -> list[float]:
        return self.backend.score_batch(texts)

    def model_hash(self) -> str:
        return hashlib.sha256(self.backend.state_bytes()).hexdigest()

    def save_tree(self) -> dict[str, bytes]:
        """Model artifact files: manifest + opaque state blob."""
        return {
            MANIFEST_FILE: json.dumps(self.manifest, ensure_ascii=False, sort_keys=True, indent=2).encode("utf-8"),
            STATE_FILE: self.backend.state_bytes(),
        }

    @classmethod
    def load_tree(cls, files: dict[str, bytes]) -> "TrainedClassifier":
        manifest = json.loads(files[MANIFEST_FILE].decode("utf-8"))
        backend = make_backend(manifest["backend_id"], manifest.get("hyperparameters"))
        backend.load_state(files[STATE_FILE])
        return cls(backend=backend, manifest=manifest)


def dataset_hash(dataset: LabeledDataset) -> str:
    h = hashlib.sha256()
    for ex in dataset.examples:
        h.update(json.dumps([ex.post_id, ex.text, ex.label, ex.provenance], ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def train(backend_spec, train_set: LabeledDataset, seed: int) -> TrainedClassifier:
    """Fit a backend on a labeled dataset.

    `backend_spec` is a backend id or (id, hyperparameters) pair. The
    train set must contain both classes.
    """
    pos, neg = train_set.class_counts()
    if pos == 0 or neg == 0:
        raise InvalidInput("training set must contain both classes")
    if isinstance(backend_spec, str):
        backend = make_backend(backend_spec)
    else:
        backend_id, hyper = backend_spec
        backend = make_backend(backend_id, hyper)
    texts = [e.text for e in train_set.examples]
    labels = [e.label for e in train_set.examples]
    backend.fit(texts, labels, seed)
    manifest = {
        "backend_id": backend.backend_id,
        "hyperparameters": backend.hyperparameters,
        "dataset": train_set.name,
        "dataset_sha256": dataset_hash(train_set),
        "seed": seed,
        "tokenization": "lowercase, split on non-alphanumeric runs, unigrams",
        "tool_version": __version__,
    }
    return TrainedClassifier(backend=backend, manifest=manifest)


def evaluate(classifier: TrainedClassifier, test_set: LabeledDataset, threshold: float = 0.5) -> Metrics:
    """Accuracy / precision / recall / F1 at the given threshold.

    Positive class is label 1; predicted positive iff score >= threshold.
    F1 is reported for the positive class and defined as 0 when P+R = 0.
    """
    if not test_set.examples:
        raise InvalidInput("test set must be non-empty")
    tp = fp = fn = tn = 0
    for ex in test_set.examples:
        pred = 1 if classifier.score(ex.text) >= threshold else 0
        if ex.label == 1 and pred == 1:
            tp += 1
        elif ex.label == 0 and pred == 1:
            fp += 1
        elif ex.label == 1 and pred == 0:
            fn += 1
        else:
            tn += 1
    n = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(
        accuracy=(tp + tn) / n,
        precision=precision,
        recall=recall,
        f1=f1,
        n=n,
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    )


def classify_corpus(classifier: TrainedClassifier, corpus: Corpus, threshold: float = 0.5, batch_size: int = 256) -> list[dict]:
    """One row per post: {"post_id", "score", "predicted"}; order preserved."""
    if not (0.0 < threshold < 1.0):
        raise InvalidInput("threshold must be in (0, 1)")
    if batch_size < 1:
        raise InvalidInput("batch_size must be >= 1")
    rows = []
    posts = corpus.posts
    for start in range(0, len(posts), batch_size):
        batch = posts[start : start + batch_size]
        scores = classifier.score_batch([p.text() for p in batch])
        for post, score in zip(batch, scores):
            rows.append({"post_id": post.id, "score": float(score), "predicted": 1 if score >= threshold else 0})
    return rows


def predictions_to_jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)


def expand_dataset(classifier: TrainedClassifier, keyword_corpus: Corpus, threshold: float = 0.5) -> Corpus:
    """Sub-corpus of posts the classifier flags positive at `threshold`."""
    rows = classify_corpus(classifier, keyword_corpus, threshold=threshold)
    keep = {r["post_id"] for r in rows if r["predicted"] == 1}
    posts = tuple(p for p in keyword_corpus.posts if p.id in keep)
    manifest = {
        "parent": keyword_corpus.name,
        "classifier_sha256": classifier.model_hash(),
        "backend_id": classifier.backend_id,
        "threshold": threshold,
        "kept": len(posts),
        "scanned": len(keyword_corpus.posts),
        "provenance": "expanded",
    }
    return Corpus(name=f"{keyword_corpus.name}.expanded", posts=posts, manifest=manifest)
