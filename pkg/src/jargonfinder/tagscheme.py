"""Span <-> tag-sequence codecs for the BIOES and BIO schemes.

Spans are half-open token intervals.  ``encode`` turns a disjoint span set
into one tag per token, ``decode`` inverts it and additionally repairs
structurally invalid tag strings (raw model output is not guaranteed to be
well formed).  ``resolve_overlaps`` implements the longest-span cleaning rule
used when building corpora from nested or overlapping annotations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

BIOES = "bioes"
BIO = "bio"
SCHEMES = (BIOES, BIO)

# Label order is fixed everywhere (tag indices, feature dims, vote argmax).
BIOES_LABELS = ("B", "I", "O", "E", "S")
BIO_LABELS = ("B", "I", "O")


def scheme_labels(scheme: str) -> tuple[str, ...]:
    if scheme == BIOES:
        return BIOES_LABELS
    if scheme == BIO:
        return BIO_LABELS
    raise ValueError(f"unknown tag scheme: {scheme!r}")


@dataclass(frozen=True, order=True)
class Span:
    """Half-open token interval [start, end) with a single kind label."""

    start: int
    end: int
    kind: str = "TERM"

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end


def resolve_overlaps(spans: Iterable[Span]) -> list[Span]:
    """Reduce a possibly nested/overlapping span set to a disjoint one.

    Keeps the longest span among conflicting ones; ties go to the leftmost
    start, then to the earliest position in the input order.  Output is
    sorted by start.
    """
    ranked = sorted(
        enumerate(spans), key=lambda item: (-(item[1].end - item[1].start), item[1].start, item[0])
    )
    kept: list[Span] = []
    for _, span in ranked:
        if not any(span.overlaps(other) for other in kept):
            kept.append(span)
    kept.sort(key=lambda s: s.start)
    return kept


def encode(spans: Sequence[Span], length: int, scheme: str = BIOES) -> list[str]:
    """Encode disjoint spans over ``length`` tokens as one tag per token."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown tag scheme: {scheme!r}")
    tags = ["O"] * length
    ordered = sorted(spans, key=lambda s: s.start)
    prev_end = -1
    for span in ordered:
        if span.start < prev_end:
            raise ValueError(f"overlapping spans at token {span.start}")
        if span.end > length:
            raise ValueError(f"span [{span.start}, {span.end}) exceeds length {length}")
        prev_end = span.end
        if len(span) == 1:
            tags[span.start] = "S" if scheme == BIOES else "B"
        else:
            tags[span.start] = "B"
            for i in range(span.start + 1, span.end - 1):
                tags[i] = "I"
            tags[span.end - 1] = "E" if scheme == BIOES else "I"
    return tags


def decode(tags: Sequence[str], scheme: str = BIOES) -> list[Span]:
    """Decode a tag sequence into spans, repairing invalid transitions.

    Repair rule (total, deterministic): an I or E with no open span opens one
    at that position; an open run closes at the last in-span token when it
    hits O, S, a new B, or the sequence end.  E always closes the run at the
    current token; S always stands alone.  The rule never fails, and for tag
    strings produced by ``encode`` it is an exact inverse under both schemes.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown tag scheme: {scheme!r}")
    spans: list[Span] = []
    open_start: int | None = None
    for i, tag in enumerate(tags):
        if tag == "B":
            if open_start is not None:
                spans.append(Span(open_start, i))
            open_start = i
        elif tag == "I":
            if open_start is None:
                open_start = i
        elif tag == "E":
            spans.append(Span(open_start if open_start is not None else i, i + 1))
            open_start = None
        elif tag == "S":
            if open_start is not None:
                spans.append(Span(open_start, i))
                open_start = None
            spans.append(Span(i, i + 1))
        elif tag == "O":
            if open_start is not None:
                spans.append(Span(open_start, i))
                open_start = None
        else:
            raise ValueError(f"unknown tag {tag!r} at position {i}")
    if open_start is not None:
        spans.append(Span(open_start, len(tags)))
    return spans


def is_valid(tags: Sequence[str], scheme: str = BIOES) -> bool:
    """Structural validity: E/I never follow O or S, every B closes, S alone."""
    labels = set(scheme_labels(scheme))
    prev = "O"
    for tag in tags:
        if tag not in labels:
            return False
        if tag in ("I", "E") and prev not in ("B", "I"):
            return False
        if scheme == BIOES and tag in ("B", "O", "S") and prev in ("B", "I"):
            return False
        prev = tag
    if scheme == BIOES and prev in ("B", "I"):
        return False
    return True
