#!/usr/bin/env python3
"""Transfer learning from hyperlink spans, on a reduced synthetic benchmark.

Generates a small instance of the seed-pinned benchmark (the full-scale
acceptance version uses 50K wiki sentences), pretrains on hyperlink labels,
then compares warm-started fine-tuning against from-scratch training over
several seeds, and traces fine-tuned F1 against pretraining steps.

Runs in about a minute on one core.
"""

import tempfile

from jargonfinder import (
    FreqTable,
    Lexicon,
    NgramMaskedScorer,
    TrainConfig,
    build_corpus,
    build_shared_vocab,
    compare_runs,
    featurize_records,
    finetune,
    generate_benchmark,
    pretrain,
    read_corpus,
    sweep,
)
from jargonfinder.evaluation import spearman
from jargonfinder.transfer import corpus_f1

with tempfile.TemporaryDirectory() as tmp:
    paths = generate_benchmark(tmp, seed=0, wiki_sentences=6000, target_sentences=800,
                               lexicon_terms=500, target_terms=120)
    wiki_path = tmp + "/wiki_corpus.jsonl"
    stats = build_corpus(paths.wiki, "wikitext-jsonl", wiki_path)
    print(f"wiki corpus: {stats['sentences']} sentences, {stats['spans']} anchor spans")

    wiki = read_corpus(wiki_path)
    splits = {n: read_corpus(getattr(paths, n)) for n in ("train", "dev", "test")}
    lexicon = Lexicon.load(paths.lexicon)
    freqs = FreqTable.load(paths.freqs)
    scorer = NgramMaskedScorer([r["tokens"] for r in wiki])
    feat = {n: featurize_records(recs, lexicon, freqs, scorer) for n, recs in splits.items()}

    vocab = build_shared_vocab([wiki, splits["train"]])
    print(f"shared vocabulary: {len(vocab)} features")

    pre_cfg = TrainConfig(head="crf", epochs=1, batch_size=32, lr=0.3, seed=0, max_steps=200)
    pre_model, checkpoints = pretrain(wiki, pre_cfg, vocab, checkpoint_every=50)
    print(f"pretrained {pre_cfg.max_steps} steps, checkpoints at {[s for s, _ in checkpoints]}")

    ft = dict(head="crf", channels=("binary",), epochs=3, batch_size=32, lr=0.3)
    warm_f1s, scratch_f1s = [], []
    for seed in range(3):
        cfg = TrainConfig(seed=seed, **ft)
        warm = finetune(pre_model, feat["train"], feat["dev"], cfg)
        scratch = finetune(None, feat["train"], feat["dev"], cfg, vocab=vocab)
        warm_f1s.append(corpus_f1(warm, feat["test"]))
        scratch_f1s.append(corpus_f1(scratch, feat["test"]))
    print(f"warm-start test F1: {[f'{x:.3f}' for x in warm_f1s]}")
    print(f"from-scratch test F1: {[f'{x:.3f}' for x in scratch_f1s]}")
    result = compare_runs(warm_f1s, scratch_f1s)
    print(f"mean improvement {result.mean_diff:.3f} (paired t, p={result.p:.3g})")

    rows = sweep(checkpoints, feat["train"], feat["dev"], feat["test"], TrainConfig(seed=0, **ft))
    print("fine-tuned F1 by pretraining step:")
    for step, f1 in rows:
        bar = "#" * int(f1 * 50)
        print(f"  step {step:4d}: {f1:.3f} {bar}")
    print(f"spearman rho vs steps: {spearman([s for s, _ in rows], [f for _, f in rows]):.3f}")
