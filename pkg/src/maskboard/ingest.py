"""Corpus loading, transition-cohort construction, and dataset preparation.

Input corpora are newline-delimited JSON dumps of forum submissions
({"id", "author", "subreddit", "created_utc", "title", "selftext"}).
From a corpus this module builds:

  * the transition cohort: anxiety-forum posts labeled by whether the
    author later (outside an exclusion window) also posted in the ADHD
    forum, with post-transition text excluded so a classifier never sees
    the future;
  * keyword sub-corpora (case-insensitive substring match);
  * author-grouped train/test splits and 50%-base-rate balanced sets.

All functions are pure over immutable inputs and deterministic for a
fixed seed.
"""

from __future__ import annotations

import io
import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InvalidInput

SECONDS_PER_DAY = 86400

# "six months" pinned to an unambiguous constant
DEFAULT_EXCLUSION_DAYS = 183

PROVENANCE_MANUAL = "manual"
PROVENANCE_COHORT = "cohort_rule"
PROVENANCE_EXPANDED = "expanded"
PROVENANCES = (PROVENANCE_MANUAL, PROVENANCE_COHORT, PROVENANCE_EXPANDED)


@dataclass(frozen=True)
class Post:
    """One forum submission. `created_at` is UTC seconds since epoch."""

    id: str
    author: str
    forum: str
    created_at: int
    title: str = ""
    body: str = ""

    def text(self) -> str:
        """Title and body joined by a blank line."""
        if self.title and self.body:
            return self.title + "\n\n" + self.body
        return self.title or self.body


@dataclass(frozen=True)
class Corpus:
    """An ordered, named collection of posts plus a provenance manifest.

    Ordering is stable (created_at, then id ascending) so every
    downstream operation is deterministic.
    """

    name: str
    posts: tuple[Post, ...]
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.posts)

    def get(self, post_id: str) -> Post | None:
        for p in self.posts:
            if p.id == post_id:
                return p
        return None


@dataclass(frozen=True)
class LabeledExample:
    post_id: str
    text: str
    label: int  # 1 positive, 0 negative
    provenance: str


@dataclass(frozen=True)
class LabeledDataset:
    """Labeled examples plus the post_id -> author map needed for grouped
    splitting. The author map never leaves the 4-field record format; it is
    re-joined from the source corpus when a dataset is reloaded."""

    name: str
    examples: tuple[LabeledExample, ...]
    authors: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.examples)

    def class_counts(self) -> tuple[int, int]:
        pos = sum(1 for e in self.examples if e.label == 1)
        return pos, len(self.examples) - pos


@dataclass(frozen=True)
class CohortConfig:
    anxiety_forum: str
    adhd_forum: str
    exclusion_window: int = DEFAULT_EXCLUSION_DAYS * SECONDS_PER_DAY  # seconds
    cutoff_date: int = 2**62  # epoch seconds; effectively "no cutoff"

    def __post_init__(self) -> None:
        if self.exclusion_window <= 0:
            raise InvalidInput("exclusion_window must be > 0")
        if not math.isfinite(self.cutoff_date):
            raise InvalidInput("cutoff_date must be finite")


def _sorted_posts(posts: Iterable[Post]) -> tuple[Post, ...]:
    return tuple(sorted(posts, key=lambda p: (p.created_at, p.id)))


def _coerce_created(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            return None
    return None


def load_posts(source, name: str = "corpus") -> Corpus:
    """Load a corpus from newline-delimited JSON records.

    `source` may be a path, an open text file, or an iterable of lines.
    Records missing id/author/created_utc (or with non-positive or
    non-integer created_utc, duplicate ids, or empty combined text) are
    skipped and counted in the manifest. An unreadable source raises.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_posts(fh, name=name)

    posts: list[Post] = []
    seen_ids: set[str] = set()
    skipped = 0
    for line in source:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            skipped += 1
            continue
        if not isinstance(rec, dict):
            skipped += 1
            continue
        pid = rec.get("id")
        author = rec.get("author")
        created = _coerce_created(rec.get("created_utc"))
        if not pid or not isinstance(pid, str) or not author or not isinstance(author, str):
            skipped += 1
            continue
        if created is None or created <= 0:
            skipped += 1
            continue
        if pid in seen_ids:
            skipped += 1
            continue
        post = Post(
            id=pid,
            author=author,
            forum=str(rec.get("subreddit", "")),
            created_at=created,
            title=str(rec.get("title") or ""),
            body=str(rec.get("selftext") or ""),
        )
        if not post.text().strip():
            skipped += 1
            continue
        seen_ids.add(pid)
        posts.append(post)

    manifest = {"source": getattr(source, "name", "stream"), "loaded": len(posts), "skipped": skipped}
    return Corpus(name=name, posts=_sorted_posts(posts), manifest=manifest)


def post_to_record(post: Post) -> dict:
    return {
        "id": post.id,
        "author": post.author,
        "subreddit": post.forum,
        "created_utc": post.created_at,
        "title": post.title,
        "selftext": post.body,
    }


def serialize_posts(corpus: Corpus) -> str:
    """Render a corpus back to the input record format (round-trip safe)."""
    out = io.StringIO()
    for post in corpus.posts:
        out.write(json.dumps(post_to_record(post), ensure_ascii=False))
        out.write("\n")
    return out.getvalue()


def build_transition_cohort(corpus: Corpus, cfg: CohortConfig) -> LabeledDataset:
    """Label anxiety-forum posts by the author's later ADHD-forum activity.

    An author is positive iff they have at least one ADHD post strictly
    after (first anxiety post + exclusion window); for those authors only
    anxiety posts strictly before the first retained ADHD post are kept.
    Authors whose ADHD posts all fall inside the window, or who posted in
    the ADHD forum before their first anxiety post, are dropped entirely.
    Negative authors have no ADHD posts at all.
    """
    anxiety: dict[str, list[Post]] = {}
    adhd_times: dict[str, list[int]] = {}
    off_cutoff = 0
    for post in corpus.posts:
        if post.created_at >= cfg.cutoff_date:
            off_cutoff += 1
            continue
        if post.forum == cfg.anxiety_forum:
            anxiety.setdefault(post.author, []).append(post)
        elif post.forum == cfg.adhd_forum:
            adhd_times.setdefault(post.author, []).append(post.created_at)

    examples: list[LabeledExample] = []
    authors: dict[str, str] = {}
    counts = {
        "positive_authors": 0,
        "negative_authors": 0,
        "dropped_window_only": 0,
        "dropped_started_in_adhd": 0,
        "dropped_no_anxiety": len([a for a in adhd_times if a not in anxiety]),
    }

    for author in sorted(anxiety):
        posts = anxiety[author]
        first_anxiety = min(p.created_at for p in posts)
        times = adhd_times.get(author, [])
        if not times:
            label, horizon = 0, None
            counts["negative_authors"] += 1
        elif min(times) < first_anxiety:
            counts["dropped_started_in_adhd"] += 1
            continue
        else:
            retained = [t for t in times if t > first_anxiety + cfg.exclusion_window]
            if not retained:
                # ADHD activity only inside the window: status ambiguous, drop
                counts["dropped_window_only"] += 1
                continue
            label, horizon = 1, min(retained)
            counts["positive_authors"] += 1

        for post in posts:
            if horizon is not None and post.created_at >= horizon:
                continue
            if not post.text().strip():
                continue
            examples.append(
                LabeledExample(post_id=post.id, text=post.text(), label=label, provenance=PROVENANCE_COHORT)
            )
            authors[post.id] = author

    order = {p.id: i for i, p in enumerate(corpus.posts)}
    examples.sort(key=lambda e: order[e.post_id])
    manifest = {
        "source_corpus": corpus.name,
        "anxiety_forum": cfg.anxiety_forum,
        "adhd_forum": cfg.adhd_forum,
        "exclusion_window_s": cfg.exclusion_window,
        "cutoff_date": cfg.cutoff_date,
        "posts_past_cutoff": off_cutoff,
        **counts,
    }
    return LabeledDataset(name=f"{corpus.name}.cohort", examples=tuple(examples), authors=authors, manifest=manifest)


def filter_keyword(corpus: Corpus, keyword: str) -> Corpus:
    """Posts whose text contains `keyword` as a case-insensitive substring."""
    if not keyword:
        raise InvalidInput("keyword must be non-empty")
    needle = keyword.casefold()
    kept = tuple(p for p in corpus.posts if needle in p.text().casefold())
    manifest = dict(corpus.manifest)
    manifest.update({"keyword": keyword, "parent": corpus.name, "kept": len(kept), "dropped": len(corpus.posts) - len(kept)})
    return Corpus(name=f"{corpus.name}.{keyword.lower()}", posts=kept, manifest=manifest)


def make_dataset(corpus: Corpus, labels: dict, provenance: str = PROVENANCE_MANUAL, name: str | None = None) -> LabeledDataset:
    """Attach labels (post_id -> 0/1) to corpus posts; unknown ids raise."""
    if provenance not in PROVENANCES:
        raise InvalidInput(f"unknown provenance {provenance!r}")
    by_id = {p.id: p for p in corpus.posts}
    missing = sorted(set(labels) - set(by_id))
    if missing:
        raise InvalidInput(f"labels reference unknown post ids: {missing[:5]}")
    examples = []
    authors = {}
    for post in corpus.posts:
        if post.id not in labels:
            continue
        label = int(labels[post.id])
        if label not in (0, 1):
            raise InvalidInput(f"label for {post.id} must be 0 or 1")
        examples.append(LabeledExample(post.id, post.text(), label, provenance))
        authors[post.id] = post.author
    return LabeledDataset(
        name=name or f"{corpus.name}.labeled",
        examples=tuple(examples),
        authors=authors,
        manifest={"source_corpus": corpus.name, "provenance": provenance, "n": len(examples)},
    )


def split(dataset: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Author-grouped train/test split, deterministic for a fixed seed.

    Targets |test| = floor(test_fraction * N) and hits it exactly whenever
    author-group sizes permit (always, for single-author examples); no
    author ever appears in both partitions.
    """
    if not dataset.examples:
        raise InvalidInput("cannot split an empty dataset")
    if not (0.0 < test_fraction < 1.0):
        raise InvalidInput("test_fraction must be in (0, 1)")
    groups: dict[str, list[int]] = {}
    for i, ex in enumerate(dataset.examples):
        author = dataset.authors.get(ex.post_id)
        if author is None:
            raise InvalidInput(f"no author known for post {ex.post_id}; re-join the source corpus first")
        groups.setdefault(author, []).append(i)
    if len(groups) < 2:
        raise InvalidInput("need at least 2 distinct authors for a grouped split")

    target = math.floor(test_fraction * len(dataset.examples))
    order = sorted(groups)
    random.Random(seed).shuffle(order)
    test_idx: set[int] = set()
    for author in order:
        size = len(groups[author])
        if len(test_idx) + size <= target:
            test_idx.update(groups[author])
        if len(test_idx) == target:
            break

    def subset(keep_test: bool, suffix: str) -> LabeledDataset:
        exs = tuple(ex for i, ex in enumerate(dataset.examples) if (i in test_idx) == keep_test)
        auth = {e.post_id: dataset.authors[e.post_id] for e in exs}
        manifest = {
            "parent": dataset.name,
            "split": suffix,
            "test_fraction": test_fraction,
            "seed": seed,
            "target_test": target,
            "actual_test": len(test_idx),
            "grouping": "author",
        }
        return LabeledDataset(f"{dataset.name}.{suffix}", exs, auth, manifest)

    return subset(False, "train"), subset(True, "test")


def balance(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Downsample the majority class (seeded) to an exact 50% base rate."""
    pos = [i for i, e in enumerate(dataset.examples) if e.label == 1]
    neg = [i for i, e in enumerate(dataset.examples) if e.label == 0]
    if not pos or not neg:
        raise InvalidInput("balance requires both classes present")
    m = min(len(pos), len(neg))
    rng = random.Random(seed)
    keep = set(rng.sample(pos, m)) | set(rng.sample(neg, m))
    exs = tuple(e for i, e in enumerate(dataset.examples) if i in keep)
    authors = {e.post_id: dataset.authors[e.post_id] for e in exs if e.post_id in dataset.authors}
    manifest = {"parent": dataset.name, "seed": seed, "per_class": m}
    return LabeledDataset(f"{dataset.name}.balanced", exs, authors, manifest)


def dataset_to_jsonl(dataset: LabeledDataset) -> str:
    out = io.StringIO()
    for ex in dataset.examples:
        out.write(json.dumps(
            {"post_id": ex.post_id, "text": ex.text, "label": ex.label, "provenance": ex.provenance},
            ensure_ascii=False,
        ))
        out.write("\n")
    return out.getvalue()


def dataset_from_jsonl(text: str, name: str, manifest: dict | None = None, corpus: Corpus | None = None) -> LabeledDataset:
    """Parse the 4-field record format; author map re-joined from `corpus`."""
    examples = []
    # split on \n only: text fields may contain NEL/LS/PS, which
    # str.splitlines() would treat as record boundaries
    for line in text.split("\n"):
        if not line.strip():
            continue
        rec = json.loads(line)
        examples.append(LabeledExample(rec["post_id"], rec["text"], int(rec["label"]), rec["provenance"]))
    authors = {}
    if corpus is not None:
        by_id = {p.id: p.author for p in corpus.posts}
        authors = {e.post_id: by_id[e.post_id] for e in examples if e.post_id in by_id}
    return LabeledDataset(name=name, examples=tuple(examples), authors=authors, manifest=dict(manifest or {}))
