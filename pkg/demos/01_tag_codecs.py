#!/usr/bin/env python3
"""Tag-scheme codecs: spans to BIOES/BIO tags and back, with repair.

Walks through the three codec operations: cleaning nested/overlapping span
annotations, encoding disjoint spans as per-token tags, and decoding tag
strings back to spans, including the repair of structurally invalid model
output.
"""

from jargonfinder import BIO, BIOES, Span, decode, encode, resolve_overlaps

print("=== overlap resolution (longest wins, then leftmost) ===")
nested = [Span(2, 4), Span(0, 4)]  # "vitamin D" nested in "25-hydroxy vitamin D"
print(f"nested spans   {[(s.start, s.end) for s in nested]}"
      f" -> {[(s.start, s.end) for s in resolve_overlaps(nested)]}")
overlapped = [Span(0, 2), Span(1, 3), Span(5, 6)]
print(f"overlap chain  {[(s.start, s.end) for s in overlapped]}"
      f" -> {[(s.start, s.end) for s in resolve_overlaps(overlapped)]}")

print()
print("=== encoding: one tag per token ===")
tokens = "the subdural hematoma was evacuated today".split()
spans = [Span(1, 3), Span(5, 6)]
for scheme in (BIOES, BIO):
    tags = encode(spans, len(tokens), scheme)
    print(f"{scheme:>5}: " + "  ".join(f"{t}/{g}" for t, g in zip(tokens, tags)))

print()
print("=== decoding, including repair of invalid tag strings ===")
cases = [
    ["B", "I", "E", "O"],   # well formed
    ["O", "I", "E", "O"],   # orphan I opens a span
    ["B", "O", "S"],        # unclosed B closes at its own token
    ["E", "E", "I"],        # pathological; repair is total
]
for tags in cases:
    spans = decode(tags, BIOES)
    print(f"{' '.join(tags):<12} -> {[(s.start, s.end) for s in spans]}")

print()
print("round trip check: decode(encode(x)) == x")
spans = [Span(0, 1), Span(3, 6), Span(8, 9)]
for scheme in (BIOES, BIO):
    assert decode(encode(spans, 10, scheme), scheme) == spans
print("ok for both schemes")
