"""Sparse lexical feature templates and the frozen feature vocabulary.

Every token fires indicator features from a fixed template set (identity,
lowercase, word shape, 1-4 char prefixes/suffixes, neighbor identities in a
+-2 window, digit/punct flags).  The vocabulary is built once over the
training corpora with a minimum-count cutoff and then frozen; at predict
time an unseen feature maps to its template's shared unknown id.  The five
concept-channel dims (B, I, O, E, S) own reserved ids so mention indicators
enter the same weight matrix as the lexical features.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .lexfeatures import CHANNEL_DIMS
from .util import DataError

FEATURE_SPEC_VERSION = 1

TEMPLATES = (
    "w0", "low", "shape",
    "pre1", "pre2", "pre3", "pre4",
    "suf1", "suf2", "suf3", "suf4",
    "w-2", "w-1", "w+1", "w+2",
    "flag",
)

_PAD_LEFT = "<s>"
_PAD_RIGHT = "</s>"


def word_shape(token: str) -> str:
    """Character-class sketch with runs collapsed: 'Shock-22' -> 'Xx-9'."""
    out = []
    for ch in token:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "9"
        else:
            cls = ch
        if not out or out[-1] != cls:
            out.append(cls)
    return "".join(out)


def token_features(tokens: Sequence[str], i: int) -> list[str]:
    tok = tokens[i]
    low = tok.casefold()
    feats = [f"w0={tok}", f"low={low}", f"shape={word_shape(tok)}"]
    for k in (1, 2, 3, 4):
        if len(tok) >= k:
            feats.append(f"pre{k}={low[:k]}")
            feats.append(f"suf{k}={low[-k:]}")
    for off in (-2, -1, 1, 2):
        j = i + off
        if 0 <= j < len(tokens):
            val = tokens[j].casefold()
        else:
            val = _PAD_LEFT if off < 0 else _PAD_RIGHT
        feats.append(f"w{off:+d}={val}")
    if tok.isdigit():
        feats.append("flag=digit")
    elif not any(ch.isalnum() for ch in tok):
        feats.append("flag=punct")
    return feats


class FeatureVocab:
    """Frozen feature-string -> id mapping with per-template unknown slots."""

    def __init__(self, features: list[str], cutoff: int):
        self.features = features
        self.cutoff = cutoff
        self.index = {f: i for i, f in enumerate(features)}
        self._unk = {t: self.index[f"{t}=<unk>"] for t in TEMPLATES}
        self._chan = np.array([self.index[f"chan={d}"] for d in CHANNEL_DIMS])

    @classmethod
    def build(cls, corpora: Iterable[Iterable[Sequence[str]]], cutoff: int = 2) -> "FeatureVocab":
        """Count template features over token sequences; keep those seen >= cutoff.

        Ids are assigned by sorted feature string, so the result does not
        depend on the order in which corpora or sentences are visited.
        """
        counts: Counter = Counter()
        for corpus in corpora:
            for tokens in corpus:
                for i in range(len(tokens)):
                    counts.update(token_features(tokens, i))
        specials = [f"{t}=<unk>" for t in TEMPLATES] + [f"chan={d}" for d in CHANNEL_DIMS]
        kept = sorted(f for f, c in counts.items() if c >= cutoff)
        return cls(specials + kept, cutoff)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def channel_ids(self) -> np.ndarray:
        return self._chan

    def feature_id(self, feat: str) -> int:
        idx = self.index.get(feat)
        if idx is not None:
            return idx
        template = feat.split("=", 1)[0]
        return self._unk[template]

    def encode_tokens(self, tokens: Sequence[str]) -> list[list[int]]:
        """Per-token feature ids (lexical templates only, no channel dims)."""
        index = self.index
        unk = self._unk
        out = []
        for i in range(len(tokens)):
            ids = []
            for feat in token_features(tokens, i):
                j = index.get(feat)
                if j is None:
                    j = unk[feat.split("=", 1)[0]]
                ids.append(j)
            out.append(ids)
        return out

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.features).encode("utf-8")).hexdigest()

    def save(self, path: str) -> None:
        payload = {
            "feature_spec_version": FEATURE_SPEC_VERSION,
            "cutoff": self.cutoff,
            "features": self.features,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "FeatureVocab":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read vocabulary {path}: {exc}") from exc
        if payload.get("feature_spec_version") != FEATURE_SPEC_VERSION:
            raise DataError(
                f"{path}: feature spec version {payload.get('feature_spec_version')} "
                f"does not match library version {FEATURE_SPEC_VERSION}"
            )
        return cls(payload["features"], payload.get("cutoff", 2))
