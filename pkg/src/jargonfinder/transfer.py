"""Transfer protocol: pretrain a tagger on hyperlink spans, warm-start
fine-tuning on the target jargon task, and checkpoint sweeps that trace
fine-tuned F1 against the number of pretraining update steps.

Both tasks share the single span kind and tag scheme, so every parameter
group (sparse/base emission weights, weighted-channel weights, transitions)
transfers.  The feature vocabulary is built once over the union of the
pretraining and target corpora and frozen before any training; the build is
order independent, so either corpus may come first.
"""

from __future__ import annotations

import csv
import logging
import os
import re
from typing import Sequence

from . import evaluation
from .crf import CrfModel, TrainConfig, load_model, predict, save_model, train
from .sparse import FeatureVocab
from .tagscheme import Span
from .util import DataError

log = logging.getLogger("jargonfinder.transfer")

CHECKPOINT_RE = re.compile(r"checkpoint-(\d+)\.jfmd$")


def build_shared_vocab(corpora: Sequence[Sequence[dict]], cutoff: int = 2) -> FeatureVocab:
    """Frozen feature vocabulary over the union of corpora (order independent)."""
    return FeatureVocab.build([[r["tokens"] for r in corpus] for corpus in corpora], cutoff)


def pretrain(
    corpus: Sequence[dict],
    config: TrainConfig,
    vocab: FeatureVocab,
    checkpoint_every: int | None = None,
    outdir: str | None = None,
    dev: Sequence[dict] | None = None,
) -> tuple[CrfModel, list[tuple[int, CrfModel]]]:
    """Train on hyperlink labels, snapshotting the model every K update steps.

    Checkpoints are taken at steps 0, K, 2K, ...; step 0 is the zero
    initialization.  With an ``outdir`` each checkpoint is also written to
    ``checkpoint-<step>.jfmd`` and the shared vocabulary to ``vocab.json``.
    """
    checkpoints: list[tuple[int, CrfModel]] = []

    def snapshot(step: int, model: CrfModel) -> None:
        snap = model.copy()
        checkpoints.append((step, snap))
        if outdir is not None:
            save_model(snap, os.path.join(outdir, f"checkpoint-{step:06d}.jfmd"))

    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        vocab.save(os.path.join(outdir, "vocab.json"))

    model = train(
        corpus, dev, config, vocab=vocab,
        checkpoint_every=checkpoint_every,
        checkpoint_cb=snapshot if checkpoint_every else None,
    )
    if outdir is not None:
        save_model(model, os.path.join(outdir, "final.jfmd"))
    return model, checkpoints


def finetune(
    init: CrfModel | None,
    train_records: Sequence[dict],
    dev_records: Sequence[dict] | None,
    config: TrainConfig,
    vocab: FeatureVocab | None = None,
) -> CrfModel:
    """Continue training from a pretrained model, or from scratch when
    ``init`` is None (zero weights over the same frozen vocabulary)."""
    if init is None and vocab is None:
        raise ValueError("scratch fine-tuning needs the shared vocabulary")
    return train(train_records, dev_records, config, vocab=vocab, init=init)


def load_checkpoints(directory: str) -> list[tuple[int, CrfModel]]:
    """All checkpoint-<step>.jfmd files in a pretrain output directory."""
    found = []
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise DataError(f"cannot list checkpoint directory {directory}: {exc}") from exc
    for name in names:
        m = CHECKPOINT_RE.match(name)
        if m:
            found.append((int(m.group(1)), load_model(os.path.join(directory, name))))
    if not found:
        raise DataError(f"no checkpoint-*.jfmd files in {directory}")
    found.sort(key=lambda item: item[0])
    return found


def corpus_f1(model: CrfModel, records: Sequence[dict]) -> float:
    gold = [[Span(s, e) for s, e in r["spans"]] for r in records]
    pred = [spans for _, spans in predict(records, model)]
    return evaluation.span_prf(gold, pred).f1


def sweep(
    checkpoints: Sequence[tuple[int, CrfModel]],
    train_records: Sequence[dict],
    dev_records: Sequence[dict] | None,
    test_records: Sequence[dict],
    config: TrainConfig,
) -> list[tuple[int, float]]:
    """Fine-tune each checkpoint independently under one config and report
    test F1 per pretraining step (step 0 is the from-scratch baseline)."""
    rows = []
    for step, ckpt in sorted(checkpoints, key=lambda item: item[0]):
        tuned = finetune(ckpt, train_records, dev_records, config)
        f1 = corpus_f1(tuned, test_records)
        log.info("sweep: step %d -> test F1 %.4f", step, f1)
        rows.append((step, f1))
    return rows


def write_sweep_csv(path: str, rows: Sequence[tuple[int, float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "test_f1"])
        for step, f1 in rows:
            writer.writerow([step, f"{f1:.6f}"])


def read_sweep_csv(path: str) -> list[tuple[int, float]]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read sweep table {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "step" not in reader.fieldnames:
            raise DataError(f"{path}: expected a CSV header with 'step' and 'test_f1'")
        return [(int(row["step"]), float(row["test_f1"])) for row in reader]
