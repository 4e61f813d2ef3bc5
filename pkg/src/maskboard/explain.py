"""Occlusion explanations: segment a post into punctuation-bounded phrases,
mask each phrase in turn, and measure the change in the classifier's
positive-class probability.

Segmentation is round-trip exact: concatenating phrase.text +
phrase.separator over all phrases reproduces the input byte for byte, for
arbitrary UTF-8 input. Masking deletes the phrase characters and keeps the
separator, so the remaining bytes are untouched and any backend (none of
which need a mask token) can score the masked variant.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import InvalidInput

# Phrase boundaries: sentence punctuation plus newline. Configurable per
# call; the active set is recorded in each explanation's policy.
DEFAULT_DELIMITERS = ".,;:!?…\n"

# "adjacent spaces" around a delimiter run join the separator
_SPACE_CHARS = " \t\r\x0b\x0c"

DEFAULT_TOP_K = 5
DEFAULT_MIN_INFLUENCE = 0.05

FORMATS = ("ansi", "html", "plain-markers")
_MARKERS = {
    "ansi": ("\x1b[91m", "\x1b[0m"),
    "html": ("<mark>", "</mark>"),
    "plain-markers": ("«", "»"),
}


@dataclass(frozen=True)
class Phrase:
    index: int
    start: int  # character offsets into the original text, half-open
    end: int
    text: str
    separator: str


@dataclass(frozen=True)
class Explanation:
    post_id: str
    base_score: float
    phrases: tuple[Phrase, ...]
    influences: tuple[float, ...]  # parallel to phrases
    highlighted: tuple[int, ...]
    policy: dict = field(default_factory=dict)


def segment_phrases(text: str, delimiters: str = DEFAULT_DELIMITERS) -> list[Phrase]:
    """Split at maximal delimiter runs; the run plus adjacent spaces is the
    trailing separator. Whitespace-only fragments fold into the previous
    separator. A delimiter run at the very start of the text (no previous
    phrase) is kept as one leading phrase with empty text."""
    if text == "":
        return []
    run_re = re.compile("[" + re.escape(delimiters) + "]+")

    items: list[list[str]] = []  # [fragment, separator] pairs, in order
    last = 0
    for m in run_re.finditer(text):
        items.append([text[last : m.start()], m.group(0)])
        last = m.end()
    if last < len(text) or not items:
        items.append([text[last:], ""])

    out: list[list[str]] = []
    for frag, sep in items:
        if out and out[-1][1]:
            # leading spaces after a separator belong to that separator
            stripped = frag.lstrip(_SPACE_CHARS)
            out[-1][1] += frag[: len(frag) - len(stripped)]
            frag = stripped
        if sep:
            core = frag.rstrip(_SPACE_CHARS)
            sep = frag[len(core) :] + sep
            frag = core
        if out and frag.strip() == "":
            out[-1][1] += frag + sep
        else:
            out.append([frag, sep])

    phrases = []
    pos = 0
    for i, (frag, sep) in enumerate(out):
        phrases.append(Phrase(index=i, start=pos, end=pos + len(frag), text=frag, separator=sep))
        pos += len(frag) + len(sep)
    assert pos == len(text), "segmentation lost bytes"
    return phrases


def mask_phrase(text: str, phrases: list[Phrase], i: int) -> str:
    """Text with phrase i's characters removed and its separator retained."""
    if not 0 <= i < len(phrases):
        raise InvalidInput(f"phrase index {i} out of range (0..{len(phrases) - 1})")
    ph = phrases[i]
    return text[: ph.start] + text[ph.end :]


def select_highlights(influences, k: int = DEFAULT_TOP_K, min_influence: float = DEFAULT_MIN_INFLUENCE) -> tuple[int, ...]:
    """Indices of the up-to-k largest influences at or above min_influence;
    ties go to the smaller index. Returned in ascending index order."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    ranked = sorted(range(len(influences)), key=lambda i: (-influences[i], i))
    chosen = [i for i in ranked[:k] if influences[i] >= min_influence]
    return tuple(sorted(chosen))


def explain(classifier, text: str, post_id: str = "",
            k: int = DEFAULT_TOP_K, min_influence: float = DEFAULT_MIN_INFLUENCE,
            delimiters: str = DEFAULT_DELIMITERS) -> Explanation:
    """Occlusion explanation for one text.

    influence[i] = score(text) - score(text with phrase i masked); positive
    influence means the phrase pushes the classifier toward the positive
    class. `classifier` is anything with a score(text) -> [0, 1] method.
    """
    policy = {"k": k, "min_influence": min_influence, "delimiters": delimiters, "mask": "deletion"}
    phrases = tuple(segment_phrases(text, delimiters))
    if not phrases:
        return Explanation(post_id, float(classifier.score(text)), (), (), (), policy)
    base = float(classifier.score(text))
    influences = tuple(base - float(classifier.score(mask_phrase(text, phrases, i))) for i in range(len(phrases)))
    highlighted = select_highlights(influences, k=k, min_influence=min_influence)
    return Explanation(post_id, base, phrases, influences, highlighted, policy)


def render_highlights(text: str, explanation: Explanation, format: str = "plain-markers") -> str:
    """Original text with highlighted phrase spans wrapped in format markers.
    Stripping the markers recovers the input byte for byte."""
    if format not in FORMATS:
        raise InvalidInput(f"format must be one of {FORMATS}")
    open_m, close_m = _MARKERS[format]
    out = text
    for i in sorted(explanation.highlighted, reverse=True):
        ph = explanation.phrases[i]
        out = out[: ph.start] + open_m + ph.text + close_m + out[ph.end :]
    return out


def strip_markers(rendered: str, format: str = "plain-markers") -> str:
    if format not in FORMATS:
        raise InvalidInput(f"format must be one of {FORMATS}")
    open_m, close_m = _MARKERS[format]
    return rendered.replace(open_m, "").replace(close_m, "")


def explanation_to_record(exp: Explanation) -> dict:
    """Export record: offsets + per-phrase influence + highlight set."""
    return {
        "post_id": exp.post_id,
        "base_score": exp.base_score,
        "phrases": [
            {"start": ph.start, "end": ph.end, "influence": inf}
            for ph, inf in zip(exp.phrases, exp.influences)
        ],
        "highlighted": list(exp.highlighted),
    }


def explanations_to_jsonl(explanations) -> str:
    return "".join(json.dumps(explanation_to_record(e), ensure_ascii=False) + "\n" for e in explanations)


def explanation_from_record(rec: dict, text: str, delimiters: str = DEFAULT_DELIMITERS) -> Explanation:
    """Rebuild an Explanation against its source text (offsets re-derived)."""
    phrases = tuple(segment_phrases(text, delimiters))
    influences = tuple(float(p["influence"]) for p in rec["phrases"])
    if len(influences) != len(phrases):
        raise InvalidInput(f"explanation for {rec.get('post_id')!r} does not match its text")
    return Explanation(
        post_id=rec["post_id"],
        base_score=float(rec["base_score"]),
        phrases=phrases,
        influences=influences,
        highlighted=tuple(int(i) for i in rec["highlighted"]),
    )
