"""Analyst-defined themes and the append-only review log.

A theme is a named group of explanation phrases; its query vector is the
re-normalized mean of the member embeddings. Reviews of search matches are
persisted as newline-delimited records in an append-only log; all counts
are reproducible by replaying the log alone.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embed import CachedEmbedder, unit
from .errors import ConflictError, InvalidInput

VERDICTS = ("match", "non_match", "unsure")
DEFAULT_REVIEW_WINDOW = 300


@dataclass(frozen=True)
class Theme:
    theme_id: str
    name: str
    members: tuple[str, ...] = ()
    notes: str = ""

    def to_json(self) -> bytes:
        doc = {"theme_id": self.theme_id, "name": self.name, "members": list(self.members), "notes": self.notes}
        return json.dumps(doc, ensure_ascii=False, indent=2).encode("utf-8")

    @classmethod
    def from_json(cls, blob: bytes) -> "Theme":
        doc = json.loads(blob.decode("utf-8"))
        return cls(doc["theme_id"], doc["name"], tuple(doc.get("members", ())), doc.get("notes", ""))


def new_theme(name: str, notes: str = "") -> Theme:
    if not name.strip():
        raise InvalidInput("theme name must be non-empty")
    return Theme(theme_id=uuid.uuid4().hex[:12], name=name.strip(), notes=notes)


def add_members(theme: Theme, phrases) -> Theme:
    members = list(theme.members)
    for p in phrases:
        if p and p not in members:
            members.append(p)
    return replace(theme, members=tuple(members))


def theme_query_vector(embedder: CachedEmbedder, theme: Theme) -> np.ndarray:
    """Re-normalized mean of member unit vectors."""
    if not theme.members:
        raise InvalidInput(f"theme {theme.name!r} has no members")
    vectors = [unit(np.asarray(v, dtype=np.float64)) for v in embedder.embed(list(theme.members))]
    mean = np.mean(vectors, axis=0)
    if float(np.linalg.norm(mean)) < 1e-12:
        raise InvalidInput("member embeddings cancel out; query vector undefined")
    return unit(mean)


@dataclass(frozen=True)
class ReviewRecord:
    theme_id: str
    corpus: str
    post_id: str
    phrase: str
    rank: int
    verdict: str
    reviewer: str
    reviewed_at: int
    action: str = "review"  # or "amend"

    def key(self) -> tuple[str, str, str, str]:
        return (self.theme_id, self.corpus, self.post_id, self.phrase)

    def to_line(self) -> str:
        return json.dumps(
            {
                "action": self.action,
                "theme_id": self.theme_id,
                "corpus": self.corpus,
                "post_id": self.post_id,
                "phrase": self.phrase,
                "rank": self.rank,
                "verdict": self.verdict,
                "reviewer": self.reviewer,
                "reviewed_at": self.reviewed_at,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_line(cls, line: str) -> "ReviewRecord":
        doc = json.loads(line)
        return cls(
            theme_id=doc["theme_id"],
            corpus=doc["corpus"],
            post_id=doc["post_id"],
            phrase=doc["phrase"],
            rank=int(doc["rank"]),
            verdict=doc["verdict"],
            reviewer=doc.get("reviewer", ""),
            reviewed_at=int(doc.get("reviewed_at", 0)),
            action=doc.get("action", "review"),
        )


@dataclass
class ReviewState:
    """Replayed view of the log: final verdict + full audit per match."""

    final: dict = field(default_factory=dict)  # key -> ReviewRecord (latest)
    audit: dict = field(default_factory=dict)  # key -> list[ReviewRecord]

    def apply(self, rec: ReviewRecord) -> None:
        key = rec.key()
        if rec.action == "review":
            if key in self.final:
                raise ConflictError(f"duplicate review for {key}; amend instead")
        elif rec.action == "amend":
            if key not in self.final:
                raise ConflictError(f"cannot amend unreviewed match {key}")
        else:
            raise InvalidInput(f"unknown review action {rec.action!r}")
        self.final[key] = rec
        self.audit.setdefault(key, []).append(rec)


@dataclass(frozen=True)
class ThemeCounts:
    theme_id: str
    corpus: str
    k: int  # match verdicts within the window
    n: int  # reviewed within the window
    window: int
    partial: bool

    @property
    def proportion(self) -> float:
        return self.k / self.n if self.n else 0.0


class ReviewLog:
    """Append-only newline-delimited review log with single-writer
    discipline (the service serializes writes). Replay == state."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.state = ReviewState()
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = ReviewRecord.from_line(line)
                except (json.JSONDecodeError, KeyError):
                    # a crash mid-append can leave one partial trailing line
                    continue
                self.state.apply(rec)

    def _append(self, rec: ReviewRecord) -> None:
        self.state.apply(rec)  # raises before touching the file
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(rec.to_line() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def record_review(self, theme_id: str, corpus: str, post_id: str, phrase: str,
                      rank: int, verdict: str, reviewer: str = "",
                      reviewed_at: int | None = None) -> ReviewRecord:
        """Persist a first review of a search match. The match is expected to
        come from top_matches for this theme+corpus; structurally we require
        a valid rank, verdict, and non-empty identifiers."""
        if verdict not in VERDICTS:
            raise InvalidInput(f"verdict must be one of {VERDICTS}")
        if rank < 1:
            raise InvalidInput("rank must be >= 1")
        if not theme_id or not corpus or not post_id or not phrase:
            raise InvalidInput("theme_id, corpus, post_id, and phrase are required")
        rec = ReviewRecord(theme_id, corpus, post_id, phrase, rank, verdict, reviewer,
                           int(time.time()) if reviewed_at is None else reviewed_at)
        self._append(rec)
        return rec

    def amend_review(self, theme_id: str, corpus: str, post_id: str, phrase: str,
                     verdict: str, reviewer: str = "", reviewed_at: int | None = None) -> ReviewRecord:
        """Explicitly change an existing verdict; the audit trail grows."""
        if verdict not in VERDICTS:
            raise InvalidInput(f"verdict must be one of {VERDICTS}")
        key = (theme_id, corpus, post_id, phrase)
        prev = self.state.final.get(key)
        if prev is None:
            raise ConflictError(f"cannot amend unreviewed match {key}")
        rec = ReviewRecord(theme_id, corpus, post_id, phrase, prev.rank, verdict, reviewer,
                           int(time.time()) if reviewed_at is None else reviewed_at, action="amend")
        self._append(rec)
        return rec

    def theme_counts(self, theme_id: str, corpus: str, window: int = DEFAULT_REVIEW_WINDOW) -> ThemeCounts:
        """k matches out of n reviewed within the top-`window` ranks; flagged
        partial until the window is fully reviewed."""
        k = n = 0
        for rec in self.state.final.values():
            if rec.theme_id != theme_id or rec.corpus != corpus or rec.rank > window:
                continue
            n += 1
            if rec.verdict == "match":
                k += 1
        return ThemeCounts(theme_id=theme_id, corpus=corpus, k=k, n=n, window=window, partial=n < window)

    def audit_for(self, theme_id: str, corpus: str, post_id: str, phrase: str) -> list[ReviewRecord]:
        return list(self.state.audit.get((theme_id, corpus, post_id, phrase), ()))


def replay_reviews(path: str | Path) -> ReviewState:
    """Rebuild review state from the log alone."""
    return ReviewLog(path).state
