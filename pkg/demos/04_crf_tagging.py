#!/usr/bin/env python3
"""Training and decoding the linear-chain CRF tagger.

Builds a small training set with planted terms, trains the sequence head,
and contrasts Viterbi decoding (which uses learned label transitions) with
the per-token cross-entropy head.  Also shows hard structural constraints
at decode time and model file round-tripping.
"""

import tempfile
from pathlib import Path

import numpy as np

from jargonfinder import TrainConfig, load_model, predict, save_model, train, viterbi
from jargonfinder.crf import transition_mask
from jargonfinder.sparse import FeatureVocab

rng = np.random.default_rng(0)
common = ["the", "cat", "sat", "on", "a", "mat", "dog"]
terms = [["zyxomia"], ["qrsal", "ploken"]]

records = []
for idx in range(120):
    tokens = [str(rng.choice(common)) for _ in range(int(rng.integers(3, 7)))]
    spans = []
    if rng.random() < 0.7:
        term = terms[int(rng.integers(0, len(terms)))]
        pos = int(rng.integers(0, len(tokens) + 1))
        tokens[pos:pos] = term
        spans.append([pos, pos + len(term)])
    records.append({"id": "demo", "sent_index": idx, "tokens": tokens, "spans": spans})

train_recs, dev_recs = records[:90], records[90:]
vocab = FeatureVocab.build([[r["tokens"] for r in train_recs]])
print(f"feature vocabulary: {len(vocab)} entries (cutoff {vocab.cutoff})")

model = train(train_recs, dev_recs, TrainConfig(head="crf", epochs=10, batch_size=8, lr=0.5), vocab=vocab)
print(f"trained {model.head}-head model over {model.labels}")

sample = [{"tokens": "the dog saw a qrsal ploken on the mat".split(), "spans": []}]
(tags, spans), = predict(sample, model)
print(f"tokens: {sample[0]['tokens']}")
print(f"tags:   {tags}")
print(f"spans:  {[(s.start, s.end) for s in spans]}")

print()
print("=== learned transitions discourage invalid moves ===")
labels = model.labels
A = model.A[:len(labels), :len(labels)]
print("    " + " ".join(f"{lab:>6}" for lab in labels))
for i, lab in enumerate(labels):
    print(f"{lab:>3} " + " ".join(f"{A[i, j]:6.2f}" for j in range(len(labels))))

print()
print("=== hard constraints guarantee structural validity ===")
P = rng.normal(scale=3.0, size=(6, len(labels)))
free = [labels[k] for k in viterbi(P, model.A * 0)]
masked = [labels[k] for k in viterbi(P, transition_mask(model.scheme))]
print(f"random emissions, no transitions:   {free}")
print(f"same emissions, hard constraints:   {masked}")

print()
print("=== model files round-trip ===")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.jfmd"
    save_model(model, str(path))
    loaded = load_model(str(path))
    assert predict(sample, loaded) == predict(sample, model)
    print(f"saved {path.stat().st_size} bytes, reloaded, predictions identical")
