#!/usr/bin/env python3
"""Weighted-voting ensemble over feature variants, plus the score analyses.

Fine-tunes the four feature-variant taggers (binary, +TF, +MLM, +TF+MLM),
combines them by validation-F1-weighted voting, and runs the TF/MLM score
analysis that separates planted rare jargon from frequent dictionary noise
and places the planted homonym in the high-TF/high-MLM quadrant.
"""

import json
import tempfile

import numpy as np

from jargonfinder import (
    FreqTable,
    Lexicon,
    NgramMaskedScorer,
    TrainConfig,
    analyze_scores,
    build_corpus,
    build_shared_vocab,
    featurize_records,
    finetune,
    generate_benchmark,
    pretrain,
    read_corpus,
)
from jargonfinder.ensemble import evaluate_members_and_ensemble
from jargonfinder.evaluation import two_sample_compare

with tempfile.TemporaryDirectory() as tmp:
    paths = generate_benchmark(tmp, seed=0, wiki_sentences=6000, target_sentences=800,
                               lexicon_terms=500, target_terms=120)
    wiki_path = tmp + "/wiki_corpus.jsonl"
    build_corpus(paths.wiki, "wikitext-jsonl", wiki_path)
    wiki = read_corpus(wiki_path)
    splits = {n: read_corpus(getattr(paths, n)) for n in ("train", "dev", "test")}
    lexicon = Lexicon.load(paths.lexicon)
    freqs = FreqTable.load(paths.freqs)
    scorer = NgramMaskedScorer([r["tokens"] for r in wiki])
    feat = {n: featurize_records(recs, lexicon, freqs, scorer) for n, recs in splits.items()}
    vocab = build_shared_vocab([wiki, splits["train"]])
    pre_model, _ = pretrain(
        wiki, TrainConfig(head="crf", epochs=1, batch_size=32, lr=0.3, seed=0, max_steps=200), vocab)

    print("=== four feature variants, one committee ===")
    variants = {
        "binary": ("binary",),
        "binary+tf": ("binary", "tf"),
        "binary+mlm": ("binary", "mlm"),
        "binary+tf+mlm": ("binary", "tf", "mlm"),
    }
    members = []
    for name, channels in variants.items():
        cfg = TrainConfig(head="crf", channels=channels, epochs=3, batch_size=32, lr=0.3, seed=0)
        members.append(finetune(pre_model, feat["train"], feat["dev"], cfg))
    rows, _ = evaluate_members_and_ensemble(members, list(variants), feat["dev"], feat["test"])
    for row in rows:
        weight = f"{row['weight']:.3f}" if row["weight"] != "" else "  --  "
        print(f"  {row['name']:<14} weight {weight}  "
              f"P {row['precision']:.3f} R {row['recall']:.3f} F1 {row['f1']:.3f}")

    print()
    print("=== TF/MLM score analysis ===")
    target_all = splits["train"] + splits["dev"] + splits["test"]
    analysis = analyze_scores(target_all, lexicon, freqs, scorer)
    jarg = [r.mlm for r in analysis.mentions if r.is_jargon]
    non = [r.mlm for r in analysis.mentions if not r.is_jargon]
    t, p = two_sample_compare(jarg, non)
    print(f"mean normalized MLM: jargon {np.mean(jarg):.3f} vs non-jargon {np.mean(non):.3f} "
          f"(Welch t={t:.1f}, p={p:.2g})")
    homonym = json.load(open(paths.meta))["homonym"]
    for row in analysis.terms:
        if row.term == homonym:
            print(f"planted homonym {homonym!r}: tf {row.tf:.3f}, mlm {row.mlm:.3f} "
                  f"-> quadrant {row.quadrant}")
    quadrants = {}
    for row in analysis.terms:
        quadrants[row.quadrant] = quadrants.get(row.quadrant, 0) + 1
    print(f"term quadrant counts: {quadrants}")
