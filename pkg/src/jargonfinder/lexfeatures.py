"""Dictionary concept matching and auxiliary feature channels.

A user-supplied lexicon stands in for a clinical terminology: exact
case-insensitive token-sequence matching produces candidate concept
mentions.  Each mention gets two familiarity weights, a term-frequency
score (rarest token dominates) and a masked-LM score (mean negative log
likelihood of the mention's tokens when they are all masked at once).
Both are Min-Max normalized over all candidate mentions of the dataset
split being featurized and frozen into the corpus artifact.

Per-token feature channels follow the 5-dim (B, I, O, E, S) layout: the
binary channel marks mention positions, the weighted channels multiply
the binary indicators by the normalized TF or MLM score.  The O dim is
left implicitly zero on non-mention tokens.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .tagscheme import BIOES_LABELS, Span, resolve_overlaps
from .util import DataError
from .wikicorpus import tokenize

log = logging.getLogger("jargonfinder.lexfeatures")

CHANNEL_DIMS = BIOES_LABELS  # (B, I, O, E, S)
N_DIMS = len(CHANNEL_DIMS)


# ---------------------------------------------------------------------------
# lexicon and concept matching


def normalize_term(term: str) -> tuple[str, ...]:
    tokens = tuple(t.casefold() for t, _, _ in tokenize(term))
    if not tokens:
        raise ValueError(f"empty term: {term!r}")
    return tokens


@dataclass
class Lexicon:
    """Set of multi-token terms, stored as case-folded token tuples."""

    entries: dict[tuple[str, ...], str] = field(default_factory=dict)
    max_len: int = 0

    @classmethod
    def from_terms(cls, terms: Iterable[str | tuple[str, str]]) -> "Lexicon":
        lex = cls()
        for item in terms:
            term, meta = item if isinstance(item, tuple) else (item, "")
            lex.add(term, meta)
        return lex

    @classmethod
    def load(cls, path: str) -> "Lexicon":
        """UTF-8, one term per line, optional tab-separated metadata, '#' comments."""
        lex = cls()
        try:
            fh = open(path, "r", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read lexicon {path}: {exc}") from exc
        with fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                term, _, meta = line.partition("\t")
                if term.strip():
                    lex.add(term.strip(), meta)
        return lex

    def add(self, term: str, meta: str = "") -> None:
        key = normalize_term(term)
        self.entries[key] = meta
        self.max_len = max(self.max_len, len(key))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: tuple[str, ...]) -> bool:
        return key in self.entries


def match_concepts(tokens: Sequence[str], lexicon: Lexicon) -> list[Span]:
    """All exact lexicon matches, reduced to the longest-leftmost disjoint set."""
    folded = [t.casefold() for t in tokens]
    n = len(folded)
    matches = []
    for i in range(n):
        limit = min(lexicon.max_len, n - i)
        for width in range(limit, 0, -1):
            if tuple(folded[i:i + width]) in lexicon.entries:
                matches.append(Span(i, i + width))
    return resolve_overlaps(matches)


# ---------------------------------------------------------------------------
# term-frequency scoring


@dataclass
class FreqTable:
    """Token -> relative frequency in (0, 1]; unseen tokens get the floor."""

    freqs: dict[str, float]
    floor: float = 1e-9

    @classmethod
    def load(cls, path: str, floor: float = 1e-9) -> "FreqTable":
        freqs = {}
        try:
            fh = open(path, "r", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read frequency table {path}: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'token<TAB>frequency'")
                value = float(parts[1])
                if not (0.0 < value <= 1.0):
                    raise DataError(f"{path}:{lineno}: frequency {value} outside (0, 1]")
                freqs[parts[0].casefold()] = value
        return cls(freqs, floor)

    def get(self, token: str) -> float:
        return self.freqs.get(token.casefold(), self.floor)


def tf_score(term_tokens: Sequence[str], freq_table: FreqTable) -> float:
    """Raw familiarity score of a multi-token term: its rarest token's frequency."""
    if not term_tokens:
        raise ValueError("empty term")
    return min(freq_table.get(tok) for tok in term_tokens)


def minmax(values: Sequence[float]) -> np.ndarray:
    """Min-Max scale to [0, 1]; an all-equal input maps to all zeros."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("minmax of empty input")
    if not np.all(np.isfinite(arr)):
        raise ValueError("minmax requires finite values")
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# masked-LM scoring


class MaskedScorer(Protocol):
    """Per-token probabilities of the original tokens in a masked range.

    Implementations must not condition on tokens inside [start, end); they
    may read the originals only to report their probabilities.
    """

    def span_probabilities(self, tokens: Sequence[str], start: int, end: int) -> list[float]:
        ...


def mlm_score(tokens: Sequence[str], span: Span, scorer: MaskedScorer) -> float:
    """Mean negative log likelihood of the span's tokens, all masked at once."""
    if span.end > len(tokens):
        raise ValueError(f"span [{span.start}, {span.end}) exceeds sentence")
    probs = scorer.span_probabilities(tokens, span.start, span.end)
    total = 0.0
    for p in probs:
        if not (0.0 < p <= 1.0):
            raise ValueError(f"scorer returned probability {p} outside (0, 1]")
        total += -math.log(p)
    return total / len(probs)


UNK = "<unk>"


class NgramMaskedScorer:
    """Bigram stand-in for a masked language model.

    The probability of a masked position is an interpolation of add-k
    smoothed conditionals on the left and right neighbors,
    lam * P(w | left) + (1 - lam) * P(w | right).  A neighbor inside the
    masked range (or beyond the sentence) backs that side off to the
    add-k unigram.  Out-of-vocabulary words map to a dedicated unknown
    slot, so no probability is ever zero and each conditional sums to one
    over the vocabulary.
    """

    def __init__(self, sentences: Iterable[Sequence[str]], order: int = 2,
                 lam: float = 0.5, k: float = 0.1):
        if order != 2:
            raise ValueError("only order=2 is supported")
        self.lam = lam
        self.k = k
        unigram: Counter = Counter()
        bigram: Counter = Counter()
        left_total: Counter = Counter()
        right_total: Counter = Counter()
        n_tokens = 0
        for sent in sentences:
            folded = [t.casefold() for t in sent]
            unigram.update(folded)
            n_tokens += len(folded)
            for a, b in zip(folded, folded[1:]):
                bigram[(a, b)] += 1
                left_total[a] += 1
                right_total[b] += 1
        if n_tokens == 0:
            raise ValueError("empty corpus")
        self.vocab = sorted(unigram) + [UNK]
        self._vocab_size = len(self.vocab)
        self._unigram = unigram
        self._bigram = bigram
        self._left_total = left_total
        self._right_total = right_total
        self._n_tokens = n_tokens

    def _fold(self, token: str) -> str:
        token = token.casefold()
        return token if token in self._unigram else UNK

    def _p_unigram(self, w: str) -> float:
        return (self._unigram.get(w, 0) + self.k) / (self._n_tokens + self.k * self._vocab_size)

    def _p_after(self, left: str, w: str) -> float:
        num = self._bigram.get((left, w), 0) + self.k
        den = self._left_total.get(left, 0) + self.k * self._vocab_size
        return num / den

    def _p_before(self, w: str, right: str) -> float:
        num = self._bigram.get((w, right), 0) + self.k
        den = self._right_total.get(right, 0) + self.k * self._vocab_size
        return num / den

    def token_probability(self, tokens: Sequence[str], i: int, start: int, end: int) -> float:
        w = self._fold(tokens[i])
        left = self._fold(tokens[i - 1]) if 0 <= i - 1 < start else None
        right = self._fold(tokens[i + 1]) if end <= i + 1 < len(tokens) else None
        p_left = self._p_after(left, w) if left is not None else self._p_unigram(w)
        p_right = self._p_before(w, right) if right is not None else self._p_unigram(w)
        return self.lam * p_left + (1.0 - self.lam) * p_right

    def span_probabilities(self, tokens: Sequence[str], start: int, end: int) -> list[float]:
        if not (0 <= start < end <= len(tokens)):
            raise ValueError(f"invalid masked range [{start}, {end})")
        return [self.token_probability(tokens, i, start, end) for i in range(start, end)]

    def position_distribution(self, tokens: Sequence[str], i: int, start: int, end: int) -> np.ndarray:
        """Full distribution over the vocabulary at one masked position."""
        saved = tokens[i]
        out = np.empty(self._vocab_size)
        work = list(tokens)
        for j, w in enumerate(self.vocab):
            work[i] = w
            out[j] = self.token_probability(work, i, start, end)
        work[i] = saved
        return out


# ---------------------------------------------------------------------------
# feature channels


@dataclass
class FeatureBundle:
    """Per-token channels, each (n_tokens, 5) in (B, I, O, E, S) dim order."""

    binary: np.ndarray
    tf_weighted: np.ndarray
    mlm_weighted: np.ndarray


def _indicator_rows(length: int, mentions: Sequence[Span]) -> np.ndarray:
    binary = np.zeros((length, N_DIMS))
    b, i_dim, _, e, s = range(N_DIMS)
    prev_end = -1
    for span in sorted(mentions, key=lambda m: m.start):
        if span.start < prev_end:
            raise ValueError(f"overlapping mentions at token {span.start}")
        if span.end > length:
            raise ValueError(f"mention [{span.start}, {span.end}) exceeds sentence")
        prev_end = span.end
        if len(span) == 1:
            binary[span.start, s] = 1.0
        else:
            binary[span.start, b] = 1.0
            binary[span.start + 1:span.end - 1, i_dim] = 1.0
            binary[span.end - 1, e] = 1.0
    return binary


def build_features(
    length: int,
    mentions: Sequence[Span],
    tf_scores: Sequence[float] | None = None,
    mlm_scores: Sequence[float] | None = None,
) -> FeatureBundle:
    """Binary indicators for the mentions plus score-weighted copies.

    ``tf_scores`` / ``mlm_scores`` are normalized per-mention weights aligned
    with ``mentions``; a missing score list leaves that channel at zero.
    """
    binary = _indicator_rows(length, mentions)
    tf_weighted = np.zeros_like(binary)
    mlm_weighted = np.zeros_like(binary)
    for idx, span in enumerate(mentions):
        rows = slice(span.start, span.end)
        if tf_scores is not None:
            tf_weighted[rows] += binary[rows] * tf_scores[idx]
        if mlm_scores is not None:
            mlm_weighted[rows] += binary[rows] * mlm_scores[idx]
    return FeatureBundle(binary, tf_weighted, mlm_weighted)


# ---------------------------------------------------------------------------
# corpus featurization


def featurize_records(
    records: Sequence[dict],
    lexicon: Lexicon,
    freq_table: FreqTable | None = None,
    scorer: MaskedScorer | None = None,
) -> list[dict]:
    """Attach candidate mentions and feature channels to corpus records.

    Two passes: raw TF/MLM scores are computed for every candidate mention of
    the split, Min-Max normalized over that whole population, and frozen into
    the returned records.  Gold spans pass through untouched.
    """
    per_record_mentions: list[list[Span]] = []
    raw_tf: list[float] = []
    raw_mlm: list[float] = []
    for rec in records:
        tokens = rec["tokens"]
        mentions = match_concepts(tokens, lexicon)
        per_record_mentions.append(mentions)
        for m in mentions:
            if freq_table is not None:
                raw_tf.append(tf_score(tokens[m.start:m.end], freq_table))
            if scorer is not None:
                raw_mlm.append(mlm_score(tokens, m, scorer))

    tf_norm = iter(minmax(raw_tf)) if raw_tf else iter(())
    mlm_norm = iter(minmax(raw_mlm)) if raw_mlm else iter(())

    out = []
    for rec, mentions in zip(records, per_record_mentions):
        n = len(rec["tokens"])
        tf_m = [float(next(tf_norm)) if freq_table is not None else 0.0 for _ in mentions]
        mlm_m = [float(next(mlm_norm)) if scorer is not None else 0.0 for _ in mentions]
        bundle = build_features(n, mentions, tf_m, mlm_m)
        new = {
            "id": rec["id"],
            "sent_index": rec["sent_index"],
            "tokens": rec["tokens"],
            "spans": rec.get("spans", []),
            "mentions": [[m.start, m.end] for m in mentions],
            "mention_tf": tf_m,
            "mention_mlm": mlm_m,
            "binary": bundle.binary.tolist(),
            "tf_weighted": bundle.tf_weighted.tolist(),
            "mlm_weighted": bundle.mlm_weighted.tolist(),
        }
        out.append(new)
    return out


def is_featurized(record: dict) -> bool:
    return "binary" in record and "mentions" in record
