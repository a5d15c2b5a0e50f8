"""Span-level exact-match metrics, seed-aggregate significance tests, and
TF/MLM score analyses of candidate concept mentions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .lexfeatures import FreqTable, Lexicon, MaskedScorer, featurize_records


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _as_pairs(spans) -> set[tuple[int, int]]:
    return {(int(s[0]), int(s[1])) if not hasattr(s, "start") else (s.start, s.end) for s in spans}


def span_counts(gold: Sequence, pred: Sequence) -> tuple[int, int, int]:
    """Exact-boundary (tp, fp, fn) over aligned sentence lists."""
    if len(gold) != len(pred):
        raise ValueError(f"misaligned corpora: {len(gold)} gold vs {len(pred)} predicted sentences")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        gs, ps = _as_pairs(g), _as_pairs(p)
        tp += len(gs & ps)
        fp += len(ps - gs)
        fn += len(gs - ps)
    return tp, fp, fn


def span_prf(gold: Sequence, pred: Sequence) -> PRF:
    """Span-level precision/recall/F1; zero denominators score 0."""
    tp, fp, fn = span_counts(gold, pred)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


class CompareResult(NamedTuple):
    mean_diff: float
    t: float
    p: float


def compare_runs(scores_a: Sequence[float], scores_b: Sequence[float]) -> CompareResult:
    """Paired two-sided t-test over per-seed score lists.

    Identical lists (zero-variance, zero-mean differences) are guarded as
    p = 1.0; a constant nonzero difference gives p = 0.0.
    """
    if len(scores_a) != len(scores_b):
        raise ValueError("score lists must be paired (equal length)")
    n = len(scores_a)
    if n < 2:
        raise ValueError("need at least 2 paired scores")
    diffs = np.asarray(scores_a, dtype=np.float64) - np.asarray(scores_b, dtype=np.float64)
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return CompareResult(0.0, 0.0, 1.0)
        return CompareResult(mean, math.copysign(math.inf, mean), 0.0)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stats.t.sf(abs(t), n - 1))
    return CompareResult(mean, t, p)


def two_sample_compare(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch two-sided t-test for independent samples (class-mean analyses)."""
    t, p = stats.ttest_ind(np.asarray(a, float), np.asarray(b, float), equal_var=False)
    return float(t), float(p)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    rho = stats.spearmanr(x, y).statistic
    return float(rho)


# ---------------------------------------------------------------------------
# TF/MLM score analysis


@dataclass
class MentionRow:
    term: str
    is_jargon: bool
    tf: float
    mlm: float


@dataclass
class TermRow:
    term: str
    count: int
    tf: float
    mlm: float
    quadrant: str


@dataclass
class ClassRow:
    name: str
    count: int
    tf_mean: float
    tf_sd: float
    mlm_mean: float
    mlm_sd: float


@dataclass
class ScoreAnalysis:
    mentions: list[MentionRow]
    terms: list[TermRow]
    classes: list[ClassRow]


def _quadrant(tf: float, mlm: float, threshold: float) -> str:
    tf_side = "high" if tf > threshold else "low"
    mlm_side = "high" if mlm > threshold else "low"
    return f"tf_{tf_side}_mlm_{mlm_side}"


def analyze_scores(
    records: Sequence[dict],
    lexicon: Lexicon,
    freq_table: FreqTable | None,
    scorer: MaskedScorer | None,
    threshold: float = 0.5,
) -> ScoreAnalysis:
    """Label every candidate mention by exact match against gold spans and
    collect normalized TF/MLM scores per mention, per term (jargon mentions
    only, for the high/low quadrant assignment), and per class."""
    featurized = featurize_records(records, lexicon, freq_table, scorer)
    mention_rows: list[MentionRow] = []
    by_term: dict[str, list[MentionRow]] = {}
    for rec in featurized:
        gold = {(s, e) for s, e in rec["spans"]}
        for (s, e), tf, mlm in zip(rec["mentions"], rec["mention_tf"], rec["mention_mlm"]):
            term = " ".join(t.casefold() for t in rec["tokens"][s:e])
            row = MentionRow(term, (s, e) in gold, tf, mlm)
            mention_rows.append(row)
            by_term.setdefault(term, []).append(row)

    term_rows = []
    for term in sorted(by_term):
        jargon_hits = [r for r in by_term[term] if r.is_jargon]
        if not jargon_hits:
            continue
        tf = float(np.mean([r.tf for r in jargon_hits]))
        mlm = float(np.mean([r.mlm for r in jargon_hits]))
        term_rows.append(TermRow(term, len(jargon_hits), tf, mlm, _quadrant(tf, mlm, threshold)))

    classes = []
    for name, flag in (("jargon", True), ("non_jargon", False)):
        rows = [r for r in mention_rows if r.is_jargon == flag]
        if rows:
            tfs = np.array([r.tf for r in rows])
            mlms = np.array([r.mlm for r in rows])
            classes.append(ClassRow(
                name, len(rows),
                float(tfs.mean()), float(tfs.std(ddof=1)) if len(rows) > 1 else 0.0,
                float(mlms.mean()), float(mlms.std(ddof=1)) if len(rows) > 1 else 0.0,
            ))
        else:
            classes.append(ClassRow(name, 0, 0.0, 0.0, 0.0, 0.0))
    return ScoreAnalysis(mention_rows, term_rows, classes)


def write_score_csv(path: str, analysis: ScoreAnalysis) -> None:
    """One CSV with a leading 'record' discriminator column.

    mention rows carry (term, is_jargon, tf, mlm); term rows add the quadrant
    assignment over that term's jargon mentions; class rows carry mean/sd.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record", "term", "is_jargon", "tf", "mlm", "quadrant", "count", "tf_sd", "mlm_sd"])
        for r in analysis.mentions:
            writer.writerow(["mention", r.term, str(r.is_jargon).lower(),
                             f"{r.tf:.6f}", f"{r.mlm:.6f}", "", "", "", ""])
        for r in analysis.terms:
            writer.writerow(["term", r.term, "true", f"{r.tf:.6f}", f"{r.mlm:.6f}",
                             r.quadrant, r.count, "", ""])
        for r in analysis.classes:
            writer.writerow(["class", r.name, "", f"{r.tf_mean:.6f}", f"{r.mlm_mean:.6f}",
                             "", r.count, f"{r.tf_sd:.6f}", f"{r.mlm_sd:.6f}"])
