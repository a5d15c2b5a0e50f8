#!/usr/bin/env python3
"""Dictionary matching and the TF / masked-LM feature channels.

A small dictionary stands in for a clinical terminology.  Candidate
mentions get a term-frequency score (rarest token dominates) and a masked
language model score (mean negative log likelihood of the mention's tokens
with the whole mention masked); both are Min-Max normalized over the
corpus.  Each mention is then expanded into 5-dim (B, I, O, E, S) per-token
channels: binary indicators and score-weighted copies.
"""

import numpy as np

from jargonfinder import (
    FreqTable,
    Lexicon,
    NgramMaskedScorer,
    Span,
    featurize_records,
    match_concepts,
    mlm_score,
    tf_score,
)

lexicon = Lexicon.from_terms(["subdural hematoma", "hematoma", "shock", "right heart"])
print("=== longest-leftmost dictionary matching ===")
for sentence in ("the subdural hematoma was drained",
                 "the right heart is strained in shock"):
    tokens = sentence.split()
    mentions = match_concepts(tokens, lexicon)
    print(f"{sentence!r}")
    for m in mentions:
        print(f"  [{m.start},{m.end}) {' '.join(tokens[m.start:m.end])!r}")

print()
print("=== term-frequency scoring: the rarest token dominates ===")
freqs = FreqTable({"shock": 0.02, "right": 0.03, "heart": 0.01,
                   "subdural": 2e-6, "hematoma": 8e-6})
for term in (["shock"], ["right", "heart"], ["subdural", "hematoma"]):
    print(f"  tf({' '.join(term)!r}) = {tf_score(term, freqs):.2e}")

print()
print("=== masked-LM scoring: unpredictable-in-context means difficult ===")
general_corpus = [
    "the patient was stable overnight".split(),
    "the team noted the patient was well".split(),
    "shock absorbers were replaced".split(),
] * 20
scorer = NgramMaskedScorer(general_corpus)
for tokens, span in (
    ("the patient was stable".split(), Span(1, 2)),     # seen context
    ("the hematoma was stable".split(), Span(1, 2)),    # unseen term
):
    score = mlm_score(tokens, span, scorer)
    print(f"  mask {' '.join(tokens[span.start:span.end])!r} in {' '.join(tokens)!r}: {score:.2f}")

print()
print("=== per-token channels on a featurized corpus ===")
records = [
    {"id": "d", "sent_index": 0, "tokens": "the subdural hematoma was stable".split(), "spans": []},
    {"id": "d", "sent_index": 1, "tokens": "no shock on arrival".split(), "spans": []},
]
feat = featurize_records(records, lexicon, freqs, scorer)
rec = feat[0]
print(f"tokens: {rec['tokens']}")
print(f"mentions: {rec['mentions']}  tf={rec['mention_tf']}  mlm={[round(x, 3) for x in rec['mention_mlm']]}")
print("binary channel (B,I,O,E,S):")
print(np.asarray(rec["binary"]))
print("tf-weighted channel:")
print(np.asarray(rec["tf_weighted"]))
