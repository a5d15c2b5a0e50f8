#!/usr/bin/env python3
"""Hyperlink-span corpus construction from wikitext articles.

Shows the per-article pipeline (markup stripping, anchor extraction,
sentence splitting, tokenization, span snapping) and a full corpus build
from a small JSONL dump, in both JSONL and CoNLL output forms.
"""

import json
import tempfile
from pathlib import Path

from jargonfinder import parse_links, split_sentences, tokenize
from jargonfinder.wikicorpus import build_corpus

body = (
    "'''Shock''' may refer to [[Shock (circulatory)|shock]], a medical emergency. "
    "Caused by [[neurodegeneration|nerve cell damage]] or blood loss. "
    "{{infobox|this template is stripped}} See [http://example.org the external site] "
    "for details. Dr. Smith described q.6h dosing and 20/40 vision."
)

print("=== markup stripping and anchor extraction ===")
text, anchors, warnings = parse_links(body)
print(f"plain text: {text!r}")
for s, e in anchors:
    print(f"  anchor span [{s},{e}): {text[s:e]!r}")
print(f"warnings: {warnings}")

print()
print("=== sentence splitting (abbreviation-aware, anchors protected) ===")
for s, e in split_sentences(text, protected=anchors):
    print(f"  [{s:3d},{e:3d}) {text[s:e]!r}")

print()
print("=== tokenization keeps clinical patterns whole ===")
print([t for t, _, _ in tokenize("Dr. Smith described q.6h dosing and 20/40 vision.")])

print()
print("=== end-to-end corpus build ===")
with tempfile.TemporaryDirectory() as tmp:
    dump = Path(tmp) / "dump.jsonl"
    with open(dump, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"id": "shock", "title": "Shock", "text": body}) + "\n")
    out_jsonl = Path(tmp) / "corpus.jsonl"
    stats = build_corpus(str(dump), "wikitext-jsonl", str(out_jsonl))
    print(f"stats: {stats}")
    for line in open(out_jsonl, encoding="utf-8"):
        rec = json.loads(line)
        print(f"  sent {rec['sent_index']}: tokens={rec['tokens']} spans={rec['spans']}")

    out_conll = Path(tmp) / "corpus.conll"
    build_corpus(str(dump), "wikitext-jsonl", str(out_conll), emit="conll")
    print()
    print("CoNLL form:")
    print(open(out_conll, encoding="utf-8").read())
