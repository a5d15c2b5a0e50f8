"""Seed-pinned synthetic transfer benchmark generator.

Builds a self-contained benchmark in one directory:

- ``wiki.jsonl``: wikitext articles whose hyperlink anchors are drawn from a
  hidden multi-token term lexicon; pretraining data for the hyperlink task.
- ``target.{train,dev,test}.jsonl``: a pre-tokenized jargon-extraction
  corpus whose gold terms overlap the hidden lexicon.  The train split draws
  terms from a head-heavy distribution while dev/test draw uniformly, so a
  sizable share of evaluation terms is rare or unseen in target training and
  must come from hyperlink pretraining.
- ``lexicon.txt``: the user-visible dictionary (partial coverage of the
  target terms, plus wiki-only terms and frequent distractor entries).
- ``freqs.tsv``: relative token frequencies counted over the wiki text.
- ``meta.json``: generation parameters and the planted constructions.

Two constructions support the score analyses: gold terms are built from
rare tokens, and one frequent token (the "homonym") is jargon only in
contexts whose neighbor tokens never occur next to it in the wiki text, so
a masked scorer trained on wiki text fails to predict it exactly there.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .util import write_jsonl

_CONSONANTS = "bcdfghjklmnpqrstvz"
_VOWELS = "aeiou"


def _pseudo_words(rng: np.random.Generator, count: int, min_syl: int, max_syl: int,
                  taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        n_syl = int(rng.integers(min_syl, max_syl + 1))
        word = "".join(
            _CONSONANTS[rng.integers(0, len(_CONSONANTS))] + _VOWELS[rng.integers(0, len(_VOWELS))]
            for _ in range(n_syl)
        )
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


@dataclass
class BenchmarkPaths:
    wiki: str
    train: str
    dev: str
    test: str
    lexicon: str
    freqs: str
    meta: str


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.power(np.arange(1, n + 1, dtype=np.float64), exponent)
    return weights / weights.sum()


def generate_benchmark(
    outdir: str,
    seed: int = 0,
    wiki_sentences: int = 50_000,
    target_sentences: int = 2_000,
    lexicon_terms: int = 2_000,
    target_terms: int = 300,
) -> BenchmarkPaths:
    rng = np.random.default_rng(seed)
    os.makedirs(outdir, exist_ok=True)

    taken: set[str] = set()
    common = _pseudo_words(rng, 160, 1, 3, taken)
    jargon_tokens = _pseudo_words(rng, 1200, 2, 5, taken)
    markers = _pseudo_words(rng, 25, 2, 4, taken)
    homonym = common[7]  # frequent by construction (rank 8 of the common pool)

    common_probs = _zipf_probs(len(common), 1.05)

    def sample_common(k: int) -> list[str]:
        idx = rng.choice(len(common), size=k, p=common_probs)
        return [common[i] for i in idx]

    # hidden term lexicon: unique 1-3 token sequences of jargon tokens,
    # plus the homonym as a single-token term
    terms: list[tuple[str, ...]] = [(homonym,)]
    seen = {(homonym,)}
    while len(terms) < lexicon_terms:
        width = int(rng.choice([1, 2, 3], p=[0.4, 0.4, 0.2]))
        term = tuple(jargon_tokens[i] for i in rng.choice(len(jargon_tokens), size=width))
        if term not in seen:
            seen.add(term)
            terms.append(term)

    # target task vocabulary overlaps the hidden lexicon; homonym included
    overlap_idx = rng.choice(np.arange(1, lexicon_terms), size=target_terms - 1, replace=False)
    target_vocab = [terms[0]] + [terms[i] for i in sorted(overlap_idx)]

    # ------------------------------------------------------------------
    # wiki articles

    def common_homonym_context() -> tuple[list[str], int]:
        """Frequent, repeatable contexts for the homonym's ordinary sense."""
        lead = sample_common(int(rng.integers(2, 5)))
        tail = sample_common(int(rng.integers(2, 5)))
        tokens = lead + [common[0], homonym, common[1]] + tail
        return tokens, len(lead) + 1

    # markers occur in wiki text with their own continuations but never in
    # the same sentence as the homonym, so masked-scorer conditionals on a
    # marker leave almost no probability for it
    def sample_non_homonym(k: int) -> list[str]:
        return [w if w != homonym else common[4] for w in sample_common(k)]

    marker_assoc = [sample_non_homonym(2) for _ in markers]

    wiki_records = []
    sent_budget = wiki_sentences
    article_id = 0
    while sent_budget > 0:
        n_sents = int(min(rng.integers(3, 7), sent_budget))
        sent_budget -= n_sents
        sentences = []
        for _ in range(n_sents):
            tokens = sample_common(int(rng.integers(5, 11)))
            roll = rng.random()
            if roll < 0.55:
                term = terms[int(rng.integers(0, len(terms)))]
                anchor = " ".join(term)
                pos = int(rng.integers(1, len(tokens) + 1))
                if rng.random() < 0.5:
                    tokens.insert(pos, f"[[{anchor}]]")
                else:
                    tokens.insert(pos, f"[[page_{rng.integers(0, 10_000)}|{anchor}]]")
            elif roll < 0.70:
                ctx, _ = common_homonym_context()
                tokens = ctx
            elif roll < 0.95:
                k = int(rng.integers(0, len(markers)))
                tokens = sample_non_homonym(len(tokens))
                pos = int(rng.integers(1, len(tokens) + 1))
                tokens[pos:pos] = [markers[k], marker_assoc[k][int(rng.integers(0, 2))]]
            head = tokens[0]
            if not head.startswith("[["):
                tokens[0] = head.capitalize()
            sentences.append(" ".join(tokens) + ".")
        wiki_records.append({
            "id": f"w{article_id:06d}",
            "title": f"w{article_id:06d}",
            "text": " ".join(sentences),
        })
        article_id += 1

    # ------------------------------------------------------------------
    # target corpus

    def plant(tokens: list[str], term: tuple[str, ...]) -> tuple[list[str], list[int]]:
        pos = int(rng.integers(1, len(tokens) + 1))
        out = tokens[:pos] + list(term) + tokens[pos:]
        return out, [pos, pos + len(term)]

    distractors: list[tuple[str, ...]] = []
    seen_d: set[tuple[str, ...]] = set()
    mid = [w for w in common[20:120] if w != homonym]
    while len(distractors) < 120:
        width = int(rng.choice([1, 2], p=[0.5, 0.5]))
        cand = tuple(mid[i] for i in rng.choice(len(mid), size=width))
        if cand not in seen_d and cand != (homonym,):
            seen_d.add(cand)
            distractors.append(cand)

    def target_sentence(term_probs: np.ndarray | None, idx: int) -> dict:
        tokens = sample_common(int(rng.integers(5, 11)))
        spans = []
        roll = rng.random()
        if roll < 0.50:
            if term_probs is None:
                term = target_vocab[int(rng.integers(0, len(target_vocab)))]
            else:
                term = target_vocab[int(rng.choice(len(target_vocab), p=term_probs))]
            if term == (homonym,):
                term = target_vocab[1]
            tokens, span = plant(tokens, term)
            spans.append(span)
        elif roll < 0.60:
            # homonym in its jargon sense: neighbors are marker tokens that
            # never appear next to it in wiki text
            m1 = markers[int(rng.integers(0, len(markers)))]
            m2 = markers[int(rng.integers(0, len(markers)))]
            pos = int(rng.integers(1, len(tokens) + 1))
            tokens = tokens[:pos] + [m1, homonym, m2] + tokens[pos:]
            spans.append([pos + 1, pos + 2])
        elif roll < 0.75:
            tokens, hpos = common_homonym_context()
        else:
            tokens, _ = plant(tokens, distractors[int(rng.integers(0, len(distractors)))])
        return {"id": "target", "sent_index": idx, "tokens": tokens, "spans": spans}

    n_train = int(target_sentences * 0.8)
    n_dev = int(target_sentences * 0.1)
    n_test = target_sentences - n_train - n_dev
    train_probs = _zipf_probs(len(target_vocab), 1.4)
    train_recs = [target_sentence(train_probs, i) for i in range(n_train)]
    dev_recs = [target_sentence(None, i) for i in range(n_dev)]
    test_recs = [target_sentence(None, i) for i in range(n_test)]

    # ------------------------------------------------------------------
    # user-visible lexicon: 70% of target terms (homonym always kept),
    # 1000 wiki-only terms, and the distractor entries
    keep = max(1, int(0.7 * len(target_vocab)))
    kept_idx = rng.choice(np.arange(1, len(target_vocab)), size=keep - 1, replace=False)
    lexicon_entries = [target_vocab[0]] + [target_vocab[i] for i in sorted(kept_idx)]
    wiki_only = [t for t in terms if t not in set(target_vocab)]
    extra_idx = rng.choice(len(wiki_only), size=min(1000, len(wiki_only)), replace=False)
    lexicon_entries += [wiki_only[i] for i in sorted(extra_idx)]
    lexicon_entries += distractors

    # ------------------------------------------------------------------
    # frequency table over wiki text (markup stripped naively by discarding
    # link syntax; counts only need to rank tokens)
    counts: Counter = Counter()
    for rec in wiki_records:
        for raw in rec["text"].replace("[[", " ").replace("]]", " ").replace("|", " ").split():
            word = raw.rstrip(".").casefold()
            if word:
                counts[word] += 1
    total = sum(counts.values())

    paths = BenchmarkPaths(
        wiki=os.path.join(outdir, "wiki.jsonl"),
        train=os.path.join(outdir, "target.train.jsonl"),
        dev=os.path.join(outdir, "target.dev.jsonl"),
        test=os.path.join(outdir, "target.test.jsonl"),
        lexicon=os.path.join(outdir, "lexicon.txt"),
        freqs=os.path.join(outdir, "freqs.tsv"),
        meta=os.path.join(outdir, "meta.json"),
    )
    write_jsonl(paths.wiki, wiki_records)
    write_jsonl(paths.train, train_recs)
    write_jsonl(paths.dev, dev_recs)
    write_jsonl(paths.test, test_recs)
    with open(paths.lexicon, "w", encoding="utf-8") as fh:
        fh.write("# synthetic benchmark lexicon\n")
        for term in lexicon_entries:
            fh.write(" ".join(term) + "\n")
    with open(paths.freqs, "w", encoding="utf-8") as fh:
        for token in sorted(counts):
            fh.write(f"{token}\t{counts[token] / total:.10f}\n")
    meta = {
        "seed": seed,
        "wiki_sentences": wiki_sentences,
        "target_sentences": target_sentences,
        "lexicon_terms": lexicon_terms,
        "target_terms": target_terms,
        "homonym": homonym,
        "markers": markers,
        "target_vocab": [" ".join(t) for t in target_vocab],
        "distractors": [" ".join(t) for t in distractors],
    }
    with open(paths.meta, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")
    return paths
