"""Phrase index construction and exact cosine top-N retrieval.

Indexes are desk-scale (<= ~1e5 phrases), so search is an exact full scan:
cosine = dot product of unit vectors, descending, ties broken by
(post_id, phrase) lexicographically. The on-disk format is a small binary
header (dimension, count, provider, corpus) followed by one row per entry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .embed import CachedEmbedder, unit
from .errors import InvalidInput
from .explain import Explanation, segment_phrases
from .ingest import Corpus

_MAGIC = b"MBPHIX01"


@dataclass(frozen=True)
class IndexEntry:
    post_id: str
    phrase: str


@dataclass
class PhraseIndex:
    corpus: str
    provider_id: str
    dimension: int
    entries: list[IndexEntry]
    vectors: np.ndarray  # (n, dimension) float64, rows unit-norm

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Match:
    rank: int  # 1-based
    post_id: str
    phrase: str
    cosine: float


def collect_phrases(corpus: Corpus, explanations: list[Explanation] | None = None,
                    all_phrases: bool = False) -> list[IndexEntry]:
    """Phrases to index: highlighted explanation phrases, or every segmented
    phrase of every post. Deduplicated on (post_id, phrase), first wins."""
    if (explanations is None) == (not all_phrases):
        raise InvalidInput("pass explanations or set all_phrases, not both")
    seen: set[tuple[str, str]] = set()
    out: list[IndexEntry] = []

    def add(post_id: str, phrase: str) -> None:
        phrase = phrase.strip()
        if not phrase:
            return
        key = (post_id, phrase)
        if key in seen:
            return
        seen.add(key)
        out.append(IndexEntry(post_id, phrase))

    if all_phrases:
        for post in corpus.posts:
            for ph in segment_phrases(post.text()):
                add(post.id, ph.text)
    else:
        by_id = {p.id: p for p in corpus.posts}
        for exp in explanations:
            if exp.post_id not in by_id:
                raise InvalidInput(f"explanation references unknown post {exp.post_id!r}")
            for i in exp.highlighted:
                add(exp.post_id, exp.phrases[i].text)
    return out


def build_index(embedder: CachedEmbedder, corpus: Corpus,
                explanations: list[Explanation] | None = None,
                all_phrases: bool = False) -> PhraseIndex:
    """Embed the selected phrases and assemble a unit-norm index."""
    if embedder.dimension <= 0:
        raise InvalidInput("provider dimension must be > 0")
    entries = collect_phrases(corpus, explanations=explanations, all_phrases=all_phrases)
    if entries:
        raw = embedder.embed([e.phrase for e in entries])
        vectors = np.vstack([unit(np.asarray(v, dtype=np.float64)) for v in raw])
    else:
        vectors = np.zeros((0, embedder.dimension))
    return PhraseIndex(
        corpus=corpus.name,
        provider_id=embedder.provider_id,
        dimension=embedder.dimension,
        entries=entries,
        vectors=vectors,
    )


def top_matches(index: PhraseIndex, query_vector: np.ndarray, n: int) -> list[Match]:
    """Exact top-n by descending cosine; ties broken by (post_id, phrase).
    Returns fewer than n only when the index is smaller."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise InvalidInput(f"query dimension {q.shape} does not match index dimension {index.dimension}")
    if not index.entries:
        return []
    cosines = index.vectors @ q
    order = sorted(
        range(len(index.entries)),
        key=lambda i: (-cosines[i], index.entries[i].post_id, index.entries[i].phrase),
    )
    return [
        Match(rank=r + 1, post_id=index.entries[i].post_id, phrase=index.entries[i].phrase,
              cosine=min(1.0, max(-1.0, float(cosines[i]))))
        for r, i in enumerate(order[:n])
    ]


def index_to_bytes(index: PhraseIndex) -> bytes:
    """Binary layout: magic, u32 dimension, u32 count, provider, corpus,
    then per row: post_id, phrase (u32-length-prefixed UTF-8) + float64s."""
    parts = [_MAGIC, struct.pack("<II", index.dimension, len(index.entries))]

    def put_str(s: str) -> None:
        b = s.encode("utf-8")
        parts.append(struct.pack("<I", len(b)))
        parts.append(b)

    put_str(index.provider_id)
    put_str(index.corpus)
    for entry, vec in zip(index.entries, index.vectors):
        put_str(entry.post_id)
        put_str(entry.phrase)
        parts.append(struct.pack(f"<{index.dimension}d", *vec))
    return b"".join(parts)


def index_from_bytes(blob: bytes) -> PhraseIndex:
    if blob[: len(_MAGIC)] != _MAGIC:
        raise InvalidInput("not a phrase index file")
    off = len(_MAGIC)
    dimension, count = struct.unpack_from("<II", blob, off)
    off += 8

    def get_str() -> str:
        nonlocal off
        (ln,) = struct.unpack_from("<I", blob, off)
        off += 4
        s = blob[off : off + ln].decode("utf-8")
        off += ln
        return s

    provider_id = get_str()
    corpus = get_str()
    entries: list[IndexEntry] = []
    vectors = np.zeros((count, dimension))
    for i in range(count):
        post_id = get_str()
        phrase = get_str()
        vectors[i] = struct.unpack_from(f"<{dimension}d", blob, off)
        off += 8 * dimension
        entries.append(IndexEntry(post_id, phrase))
    if off != len(blob):
        raise InvalidInput("trailing bytes in phrase index file")
    return PhraseIndex(corpus=corpus, provider_id=provider_id, dimension=dimension, entries=entries, vectors=vectors)
