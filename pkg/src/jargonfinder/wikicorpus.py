"""Hyperlink-span corpus construction from wikitext-style articles.

The pipeline per article: strip templates/tables, reduce external links to
their labels, extract internal-link anchors as character spans, split into
sentences (anchor spans are never cut by a boundary), tokenize, snap anchor
spans outward to whole tokens, resolve overlaps, and emit one record per
sentence.  Output order is (article id, sentence index) regardless of the
worker count, so corpus builds are byte-reproducible.

Supported wikitext subset: ``[[Target]]``, ``[[Target|anchor]]``, nested
``{{templates}}`` and ``{| tables |}`` (stripped wholesale), and external
links ``[http://... label]`` (reduced to the label, no span).  Anything else
is literal text.  Unbalanced brackets are kept as literal text and counted
as per-article warnings.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Iterable, Sequence

from .tagscheme import BIOES, Span, encode, resolve_overlaps
from .util import DataError, write_jsonl

log = logging.getLogger("jargonfinder.wikicorpus")

DEFAULT_ABBREVIATIONS = frozenset({
    "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "Jr.", "Sr.",
    "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "Fig.", "No.", "Inc.", "Co.",
})


@dataclass
class Article:
    id: str
    title: str
    body: str


# ---------------------------------------------------------------------------
# wikitext parsing


def _drop_matched_regions(text: str, open_tok: str, close_tok: str) -> tuple[str, int]:
    """Remove outermost ``open_tok``...``close_tok`` regions (nesting aware).

    Orphan open/close tokens stay literal and are counted as warnings.
    """
    regions: list[tuple[int, int]] = []
    stack: list[int] = []
    warnings = 0
    i = 0
    n = len(text)
    while i < n:
        if text.startswith(open_tok, i):
            stack.append(i)
            i += len(open_tok)
        elif text.startswith(close_tok, i):
            if stack:
                start = stack.pop()
                if not stack:
                    regions.append((start, i + len(close_tok)))
            else:
                warnings += 1
            i += len(close_tok)
        else:
            i += 1
    warnings += len(stack)
    if not regions:
        return text, warnings
    parts = []
    pos = 0
    for start, end in regions:
        parts.append(text[pos:start])
        pos = end
    parts.append(text[pos:])
    return "".join(parts), warnings


_EXT_LINK_RE = re.compile(r"\[(?:https?|ftp)://[^\s\]]*(?:[ \t]+([^\]]*))?\]")


def parse_links(body: str) -> tuple[str, list[tuple[int, int]], int]:
    """Strip markup and extract internal-link anchors.

    Returns (plain_text, anchor char spans sorted by position, warning count).
    Each span covers exactly the visible anchor text in plain_text.
    """
    text, warnings = _drop_matched_regions(body, "{{", "}}")
    text, w = _drop_matched_regions(text, "{|", "|}")
    warnings += w
    text = _EXT_LINK_RE.sub(lambda m: m.group(1) or "", text)

    out: list[str] = []
    out_len = 0
    spans: list[tuple[int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        if text.startswith("[[", i):
            close = text.find("]]", i + 2)
            nxt = text.find("[[", i + 2)
            if close == -1 or (nxt != -1 and nxt < close):
                # orphan opener (unclosed, or a nested link starts first)
                out.append("[[")
                out_len += 2
                warnings += 1
                i += 2
                continue
            content = text[i + 2:close]
            anchor = content.rsplit("|", 1)[-1] if "|" in content else content
            if anchor:
                lead = len(anchor) - len(anchor.lstrip())
                tail = len(anchor.rstrip())
                if tail > lead:
                    spans.append((out_len + lead, out_len + tail))
                out.append(anchor)
                out_len += len(anchor)
            i = close + 2
        elif text.startswith("]]", i):
            out.append("]]")
            out_len += 2
            warnings += 1
            i += 2
        else:
            out.append(text[i])
            out_len += 1
            i += 1
    return "".join(out), spans, warnings


# ---------------------------------------------------------------------------
# sentence splitting and tokenization

_BOUNDARY_RE = re.compile(r"[.!?]+(\s+)")


def load_abbreviations(path: str) -> frozenset[str]:
    """One abbreviation per line ('#' comments); replaces the default list."""
    entries = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                entries.add(line)
    return frozenset(entries)


def split_sentences(
    text: str,
    abbreviations: frozenset[str] | None = None,
    protected: Sequence[tuple[int, int]] = (),
) -> list[tuple[int, int]]:
    """Rule-based sentence splitter returning char ranges.

    A boundary is placed after ``. ! ?`` followed by whitespace and an
    uppercase letter, unless the preceding chunk (e.g. "Dr.") is in the
    abbreviation list (matched exactly).  A boundary inside a protected span
    is moved past the span.  Ranges are trimmed to non-whitespace.
    """
    if abbreviations is None:
        abbreviations = DEFAULT_ABBREVIATIONS
    boundaries = []
    for m in _BOUNDARY_RE.finditer(text):
        j = m.end()
        if j >= len(text) or not text[j].isupper():
            continue
        punct_end = m.end() - len(m.group(1))
        k = punct_end
        while k > 0 and not text[k - 1].isspace():
            k -= 1
        if text[k:punct_end] in abbreviations:
            continue
        boundaries.append(j)

    if protected:
        moved = []
        for b in boundaries:
            changed = True
            while changed:
                changed = False
                for s, e in protected:
                    if s < b < e:
                        b = e
                        changed = True
            moved.append(b)
        boundaries = moved

    ranges: list[tuple[int, int]] = []
    prev = 0
    for b in sorted(set(boundaries)):
        if not (prev < b < len(text)):
            continue
        ranges.append((prev, b))
        prev = b
    ranges.append((prev, len(text)))

    trimmed = []
    for s, e in ranges:
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if s < e:
            trimmed.append((s, e))
    return trimmed


_TOKEN_RE = re.compile(
    r"\d+/\d+"                      # ratios: 20/40
    r"|\d+\.\d+"                    # decimals: 3.5
    r"|(?:[A-Za-z]\.){2,}"          # dotted abbreviations: p.o., q.i.d.
    r"|[A-Za-z]+\.\d+[A-Za-z0-9]*"  # dosing shorthand: q.6h
    r"|\w+(?:-\w+)*"                # words, intra-word hyphens kept
    r"|\S"                          # any other single character
)


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Word-level tokens with exact char offsets; covers every non-space char."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


# ---------------------------------------------------------------------------
# corpus building


def _char_span_to_token_span(
    tokens: Sequence[tuple[str, int, int]], cs: int, ce: int
) -> tuple[int, int] | None:
    """Snap a char interval outward to whole tokens; None if nothing overlaps."""
    hit = [k for k, (_, ts, te) in enumerate(tokens) if ts < ce and te > cs]
    if not hit:
        return None
    return hit[0], hit[-1] + 1


def process_article(
    article: Article, abbreviations: frozenset[str] | None = None
) -> tuple[str, list[dict], int]:
    """Run the full per-article pipeline; returns (id, records, warnings)."""
    text, char_spans, warnings = parse_links(article.body)
    ranges = split_sentences(text, abbreviations, protected=char_spans)
    records = []
    for idx, (s, e) in enumerate(ranges):
        tokens = [(t, ts + s, te + s) for t, ts, te in tokenize(text[s:e])]
        spans = []
        for cs, ce in char_spans:
            if cs >= e or ce <= s:
                continue
            tok_span = _char_span_to_token_span(tokens, cs, min(ce, e))
            if tok_span is not None:
                spans.append(Span(*tok_span))
        spans = resolve_overlaps(spans)
        records.append({
            "id": article.id,
            "sent_index": idx,
            "tokens": [t for t, _, _ in tokens],
            "spans": [[sp.start, sp.end] for sp in spans],
        })
    return article.id, records, warnings


def _process_article_star(args):
    return process_article(*args)


def read_articles(path: str, fmt: str) -> tuple[list[Article], int]:
    """Read a dump file; returns (articles, malformed count)."""
    if fmt == "wikitext-jsonl":
        return _read_articles_jsonl(path)
    if fmt == "flat":
        return _read_articles_flat(path)
    raise ValueError(f"unknown article format: {fmt!r}")


def _read_articles_jsonl(path: str) -> tuple[list[Article], int]:
    articles, skipped = [], 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                articles.append(Article(str(obj["id"]), str(obj.get("title", "")), str(obj["text"])))
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
    return articles, skipped


_FLAT_HEADER_RE = re.compile(r"^==\s*(.+?)\s*==\s*$")


def _read_articles_flat(path: str) -> tuple[list[Article], int]:
    articles, skipped = [], 0
    current_id = None
    buf: list[str] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line in fh:
            m = _FLAT_HEADER_RE.match(line)
            if m:
                if current_id is not None:
                    articles.append(Article(current_id, current_id, "".join(buf)))
                elif any(s.strip() for s in buf):
                    skipped += 1
                current_id = m.group(1)
                buf = []
            else:
                buf.append(line)
    if current_id is not None:
        articles.append(Article(current_id, current_id, "".join(buf)))
    elif any(s.strip() for s in buf):
        skipped += 1
    return articles, skipped


def build_corpus(
    input_path: str,
    fmt: str = "wikitext-jsonl",
    out_path: str | None = None,
    emit: str = "jsonl",
    scheme: str = BIOES,
    abbreviations: frozenset[str] | None = None,
    workers: int = 1,
) -> dict:
    """End-to-end dump -> labeled-sentence corpus; returns run statistics."""
    articles, skipped = read_articles(input_path, fmt)

    if workers > 1:
        with Pool(workers) as pool:
            results = list(pool.imap(
                _process_article_star,
                ((a, abbreviations) for a in articles),
                chunksize=64,
            ))
    else:
        results = [process_article(a, abbreviations) for a in articles]

    seen: set[str] = set()
    kept = []
    for art_id, records, warnings in results:
        if art_id in seen:
            skipped += 1
            continue
        seen.add(art_id)
        kept.append((art_id, records, warnings))
    kept.sort(key=lambda item: item[0])

    records = [rec for _, recs, _ in kept for rec in recs]
    total_warnings = sum(w for _, _, w in kept)

    if out_path is not None:
        if emit == "jsonl":
            write_jsonl(out_path, records)
        elif emit == "conll":
            write_conll(out_path, records, scheme)
        else:
            raise ValueError(f"unknown emit format: {emit!r}")

    stats = {
        "articles": len(kept),
        "skipped": skipped,
        "sentences": len(records),
        "spans": sum(len(r["spans"]) for r in records),
        "warnings": total_warnings,
    }
    log.info("build_corpus: %s", stats)
    if out_path is None:
        stats["records"] = records
    return stats


# ---------------------------------------------------------------------------
# corpus io


def write_conll(path: str, records: Iterable[dict], scheme: str = BIOES) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        current = None
        for rec in records:
            if rec["id"] != current:
                current = rec["id"]
                fh.write(f"-DOCSTART- {current}\n\n")
            tags = encode([Span(s, e) for s, e in rec["spans"]], len(rec["tokens"]), scheme)
            for tok, tag in zip(rec["tokens"], tags):
                fh.write(f"{tok}\t{tag}\n")
            fh.write("\n")


def read_corpus(path: str, scheme: str = BIOES) -> list[dict]:
    """Read a corpus in JSONL or CoNLL form into sentence records."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            head = fh.read(1)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if head == "{":
        return list(_read_corpus_jsonl(path))
    return _read_corpus_conll(path, scheme)


def _read_corpus_jsonl(path: str):
    from .util import read_jsonl

    for rec in read_jsonl(path):
        if "tokens" not in rec:
            raise DataError(f"{path}: record missing 'tokens'")
        rec.setdefault("spans", [])
        yield rec


def _read_corpus_conll(path: str, scheme: str) -> list[dict]:
    from .tagscheme import decode

    records = []
    doc_id = "doc0"
    sent_index = 0
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        nonlocal tokens, tags, sent_index
        if tokens:
            spans = decode(tags, scheme)
            records.append({
                "id": doc_id,
                "sent_index": sent_index,
                "tokens": tokens,
                "spans": [[s.start, s.end] for s in spans],
            })
            sent_index += 1
        tokens, tags = [], []

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("-DOCSTART-"):
                flush()
                doc_id = line[len("-DOCSTART-"):].strip() or doc_id
                sent_index = 0
            elif not line.strip():
                flush()
            else:
                parts = line.split("\t")
                if len(parts) < 2:
                    raise DataError(f"{path}: malformed CoNLL line: {line!r}")
                tokens.append(parts[0])
                tags.append(parts[-1])
    flush()
    return records
