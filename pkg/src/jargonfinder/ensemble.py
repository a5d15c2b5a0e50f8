"""Weighted-voting ensemble over feature-variant taggers.

Each member's vote weight is its span F1 on a validation set.  At test time
every member emits a hard one-hot label per token; the committee accumulates
weight-scaled votes and takes the per-token argmax (ties go to the lowest
label index), then repair-decodes the voted tag string into spans.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import evaluation
from .crf import CrfModel, predict
from .tagscheme import Span, decode

log = logging.getLogger("jargonfinder.ensemble")


@dataclass
class WeightedCommittee:
    members: list[CrfModel]
    weights: list[float]

    def __post_init__(self):
        if not self.members:
            raise ValueError("committee needs at least one member")
        if len(self.members) != len(self.weights):
            raise ValueError("one weight per member required")
        if any(w < 0 for w in self.weights):
            raise ValueError("vote weights must be nonnegative")
        first = self.members[0]
        for m in self.members[1:]:
            if m.labels != first.labels or m.scheme != first.scheme:
                raise ValueError("committee members must share label set and scheme")


def calibrate(members: Sequence[CrfModel], validation: Sequence[dict]) -> WeightedCommittee:
    """Set each member's vote weight to its validation span F1."""
    if not validation:
        raise ValueError("empty validation set")
    gold = [[Span(s, e) for s, e in r["spans"]] for r in validation]
    weights = []
    for member in members:
        pred = [spans for _, spans in predict(validation, member)]
        weights.append(evaluation.span_prf(gold, pred).f1)
    return WeightedCommittee(list(members), weights)


def vote(committee: WeightedCommittee, records: Sequence[dict]) -> list[tuple[list[str], list[Span]]]:
    """Weight-scaled one-hot voting per token, then repair-decode to spans."""
    labels = committee.members[0].labels
    scheme = committee.members[0].scheme
    label_index = {lab: k for k, lab in enumerate(labels)}
    member_outputs = [predict(records, m) for m in committee.members]

    results = []
    for s_idx, record in enumerate(records):
        n = len(record["tokens"])
        tally = np.zeros((n, len(labels)))
        for weight, outputs in zip(committee.weights, member_outputs):
            tags, _ = outputs[s_idx]
            if len(tags) != n:
                raise ValueError(
                    f"member emitted {len(tags)} tags for a {n}-token sentence"
                )
            for i, tag in enumerate(tags):
                tally[i, label_index[tag]] += weight
        voted = [labels[k] for k in tally.argmax(axis=1)]
        results.append((voted, decode(voted, scheme)))
    return results


def evaluate_members_and_ensemble(
    members: Sequence[CrfModel],
    member_names: Sequence[str],
    validation: Sequence[dict],
    test: Sequence[dict],
) -> tuple[list[dict], list[tuple[list[str], list[Span]]]]:
    """Calibrate, vote, and score; returns (report rows, ensemble predictions)."""
    committee = calibrate(members, validation)
    gold = [[Span(s, e) for s, e in r["spans"]] for r in test]
    rows = []
    for name, weight, member in zip(member_names, committee.weights, committee.members):
        pred = [spans for _, spans in predict(test, member)]
        prf = evaluation.span_prf(gold, pred)
        rows.append({
            "name": name, "weight": weight,
            "precision": prf.precision, "recall": prf.recall, "f1": prf.f1,
        })
    voted = vote(committee, test)
    prf = evaluation.span_prf(gold, [spans for _, spans in voted])
    rows.append({
        "name": "ensemble", "weight": "",
        "precision": prf.precision, "recall": prf.recall, "f1": prf.f1,
    })
    return rows, voted


def write_report(path: str, rows: Sequence[dict]) -> None:
    """CSV report; a .md path gets a Markdown table instead."""
    def fmt(value):
        return f"{value:.6f}" if isinstance(value, float) else str(value)

    columns = ["name", "weight", "precision", "recall", "f1"]
    if path.endswith(".md"):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("| " + " | ".join(columns) + " |\n")
            fh.write("|" + "|".join("---" for _ in columns) + "|\n")
            for row in rows:
                fh.write("| " + " | ".join(fmt(row[c]) for c in columns) + " |\n")
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([fmt(row[c]) for c in columns])
