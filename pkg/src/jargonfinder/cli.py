"""Single entry-point command line exposing the whole pipeline.

Subcommands cover corpus construction, featurization, pretraining,
(fine-)tuning, checkpoint sweeps, prediction, ensembling, evaluation, score
analyses, and the synthetic benchmark generator.  Option values resolve with
the precedence flags > config file > defaults; every run logs the fully
resolved configuration plus a content hash of each input file, and writes a
sidecar ``<artifact>.config`` next to every output artifact so any artifact
can be regenerated byte-identically via ``--config``.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

from . import crf, ensemble, evaluation, synthetic, transfer, wikicorpus
from .lexfeatures import FreqTable, Lexicon, NgramMaskedScorer, featurize_records, is_featurized
from .sparse import FeatureVocab
from .tagscheme import Span
from .util import DataError, sha256_file, write_jsonl

log = logging.getLogger("jargonfinder.cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class Opt:
    flag: str
    output: bool = False   # value is an output artifact path (gets a sidecar)
    input: bool = False    # value is an input file path (hash logged)
    required: bool = False
    kwargs: dict = field(default_factory=dict)

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _common_train_opts(head_default="crf"):
    return [
        Opt("--head", kwargs=dict(choices=["crf", "ce"], default=head_default)),
        Opt("--features", kwargs=dict(default="", help="comma list of binary,tf,mlm")),
        Opt("--scheme", kwargs=dict(choices=["bioes", "bio"], default="bioes")),
        Opt("--epochs", kwargs=dict(type=int, default=3)),
        Opt("--batch", kwargs=dict(type=int, default=32)),
        Opt("--lr", kwargs=dict(type=float, default=0.3)),
        Opt("--lr-decay", kwargs=dict(type=float, default=200.0)),
        Opt("--l2", kwargs=dict(type=float, default=0.0)),
        Opt("--patience", kwargs=dict(type=int, default=0)),
        Opt("--max-steps", kwargs=dict(type=int, default=None)),
        Opt("--cutoff", kwargs=dict(type=int, default=2, help="feature vocabulary min count")),
    ]


_FEATURIZE_OPTS = [
    Opt("--lexicon", input=True, kwargs=dict(help="term dictionary file")),
    Opt("--freq", input=True, kwargs=dict(help="token frequency table")),
    Opt("--freq-floor", kwargs=dict(type=float, default=1e-9)),
    Opt("--mlm-corpus", input=True, kwargs=dict(help="corpus for the masked scorer (default: the corpus itself)")),
    Opt("--mlm-lambda", kwargs=dict(type=float, default=0.5)),
    Opt("--mlm-k", kwargs=dict(type=float, default=0.1)),
]

COMMANDS: dict[str, list[Opt]] = {
    "build-corpus": [
        Opt("--input", input=True, required=True),
        Opt("--format", kwargs=dict(choices=["wikitext-jsonl", "flat"], default="wikitext-jsonl")),
        Opt("--out", output=True, required=True),
        Opt("--emit", kwargs=dict(choices=["jsonl", "conll"], default="jsonl")),
        Opt("--scheme", kwargs=dict(choices=["bioes", "bio"], default="bioes")),
        Opt("--abbrev", input=True, kwargs=dict(help="abbreviation stop-list file")),
    ],
    "featurize": [
        Opt("--corpus", input=True, required=True),
        Opt("--out", output=True, required=True),
    ] + _FEATURIZE_OPTS,
    "pretrain": [
        Opt("--corpus", input=True, required=True),
        Opt("--dev", input=True),
        Opt("--vocab", input=True, kwargs=dict(help="frozen vocabulary json")),
        Opt("--vocab-extra", kwargs=dict(help="comma list of corpora added to the vocabulary build")),
        Opt("--checkpoint-every", kwargs=dict(type=int, default=0)),
        Opt("--out", output=True, required=True, kwargs=dict(help="checkpoint directory")),
    ] + _common_train_opts(),
    "train": [
        Opt("--corpus", input=True, required=True),
        Opt("--dev", input=True),
        Opt("--vocab", input=True),
        Opt("--out", output=True, required=True),
    ] + _FEATURIZE_OPTS + _common_train_opts(),
    "finetune": [
        Opt("--init", kwargs=dict(help="pretrained model file, or 'none' for scratch")),
        Opt("--corpus", input=True, required=True),
        Opt("--dev", input=True),
        Opt("--vocab", input=True),
        Opt("--out", output=True, required=True),
    ] + _FEATURIZE_OPTS + _common_train_opts(),
    "sweep": [
        Opt("--checkpoints", required=True, kwargs=dict(help="pretrain output directory")),
        Opt("--corpus", input=True, required=True),
        Opt("--dev", input=True),
        Opt("--test", input=True, required=True),
        Opt("--out", output=True, required=True, kwargs=dict(help="CSV of (step, test F1)")),
    ] + _FEATURIZE_OPTS + _common_train_opts(),
    "predict": [
        Opt("--model", input=True, required=True),
        Opt("--input", input=True, required=True),
        Opt("--out", output=True, required=True),
        Opt("--hard-constraints", kwargs=dict(action="store_true")),
    ],
    "ensemble": [
        Opt("--members", required=True, kwargs=dict(help="comma list of model files")),
        Opt("--valid", input=True, required=True),
        Opt("--test", input=True, required=True),
        Opt("--out-pred", output=True, required=True),
        Opt("--out-report", output=True, required=True),
    ],
    "eval": [
        Opt("--gold", input=True, required=True),
        Opt("--pred", input=True, required=True),
        Opt("--gold-field", kwargs=dict(default="spans")),
        Opt("--pred-field", kwargs=dict(default="spans", help="'mentions' scores a featurized file's dictionary matches")),
        Opt("--scheme", kwargs=dict(choices=["bioes", "bio"], default="bioes")),
        Opt("--out", output=True, required=True),
    ],
    "analyze scores": [
        Opt("--corpus", input=True, required=True),
        Opt("--out", output=True, required=True),
        Opt("--threshold", kwargs=dict(type=float, default=0.5)),
    ] + _FEATURIZE_OPTS,
    "analyze compare": [
        Opt("--a", input=True, required=True, kwargs=dict(help="CSV with an f1 column")),
        Opt("--b", input=True, required=True),
        Opt("--out", output=True, required=True),
    ],
    "analyze plot-data": [
        Opt("--sweep", input=True, required=True),
        Opt("--out", output=True, required=True),
    ],
    "make-benchmark": [
        Opt("--out", output=True, required=True, kwargs=dict(help="benchmark directory")),
        Opt("--wiki-sentences", kwargs=dict(type=int, default=50_000)),
        Opt("--target-sentences", kwargs=dict(type=int, default=2_000)),
        Opt("--lexicon-terms", kwargs=dict(type=int, default=2_000)),
        Opt("--target-terms", kwargs=dict(type=int, default=300)),
    ],
}

GLOBAL_OPTS = [
    Opt("--seed", kwargs=dict(type=int, default=0)),
    Opt("--workers", kwargs=dict(type=int, default=1)),
    Opt("--log-level", kwargs=dict(default=None, help="overrides JF_LOG")),
    Opt("--config", kwargs=dict(help="flat key=value config file (flags win)")),
]


# ---------------------------------------------------------------------------
# config resolution


def _build_parser(command: str, suppress_defaults: bool) -> _Parser:
    parser = _Parser(prog=f"jargonfinder {command}", add_help=True)
    for opt in COMMANDS[command] + GLOBAL_OPTS:
        kwargs = dict(opt.kwargs)
        if suppress_defaults:
            kwargs["default"] = argparse.SUPPRESS
        parser.add_argument(opt.flag, **kwargs)
    return parser


def _parse_config_file(path: str, command: str) -> dict[str, str]:
    opts = {o.dest: o for o in COMMANDS[command] + GLOBAL_OPTS}
    values: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            dest = key.strip().replace("-", "_")
            if dest not in opts:
                raise UsageError(f"{path}:{lineno}: unknown config key {key.strip()!r}")
            values[dest] = value.strip()
    return values


def _convert(opt: Opt, raw: str) -> Any:
    if opt.kwargs.get("action") == "store_true":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config value for {opt.flag} must be boolean, got {raw!r}")
    typ = opt.kwargs.get("type", str)
    if raw.lower() == "none":
        return None
    try:
        return typ(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {opt.flag}: {raw!r} ({exc})") from exc


def resolve_config(command: str, argv: list[str]) -> argparse.Namespace:
    """Flags > config file > defaults; every required flag present afterwards."""
    full = _build_parser(command, suppress_defaults=False)
    ns = full.parse_args(argv)
    explicit = vars(_build_parser(command, suppress_defaults=True).parse_args(argv))

    if ns.config:
        file_values = _parse_config_file(ns.config, command)
        opts = {o.dest: o for o in COMMANDS[command] + GLOBAL_OPTS}
        for dest, raw in file_values.items():
            if dest not in explicit:
                setattr(ns, dest, _convert(opts[dest], raw))

    for opt in COMMANDS[command]:
        if opt.required and getattr(ns, opt.dest) in (None, ""):
            raise UsageError(f"missing required option {opt.flag}")
    return ns


def _sidecar_text(command: str, ns: argparse.Namespace) -> str:
    lines = [f"# jargonfinder {command}"]
    for opt in sorted(COMMANDS[command] + GLOBAL_OPTS, key=lambda o: o.dest):
        if opt.dest == "config":
            continue
        value = getattr(ns, opt.dest)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{opt.dest.replace('_', '-')} = {value}")
    return "\n".join(lines) + "\n"


def _write_sidecars(command: str, ns: argparse.Namespace) -> None:
    text = _sidecar_text(command, ns)
    for opt in COMMANDS[command]:
        if not opt.output:
            continue
        path = getattr(ns, opt.dest)
        if not path or path == "-":
            continue
        sidecar = os.path.join(path, "run.config") if os.path.isdir(path) else path + ".config"
        with open(sidecar, "w", encoding="utf-8") as fh:
            fh.write(text)


def _log_run(command: str, ns: argparse.Namespace) -> None:
    resolved = {
        opt.dest: getattr(ns, opt.dest)
        for opt in COMMANDS[command] + GLOBAL_OPTS
        if opt.dest != "config" and getattr(ns, opt.dest) is not None
    }
    log.info("command %s config: %s", command, json.dumps(resolved, sort_keys=True, default=str))
    for opt in COMMANDS[command]:
        if opt.input:
            path = getattr(ns, opt.dest)
            if path and os.path.isfile(path):
                log.info("input %s sha256=%s", path, sha256_file(path))


# ---------------------------------------------------------------------------
# shared handler pieces


def _channels(features: str) -> tuple[str, ...]:
    if not features:
        return ()
    channels = tuple(part.strip() for part in features.split(",") if part.strip())
    bad = [c for c in channels if c not in crf.CHANNELS]
    if bad:
        raise UsageError(f"unknown --features entries: {', '.join(bad)}")
    return channels


def _train_config(ns: argparse.Namespace) -> crf.TrainConfig:
    return crf.TrainConfig(
        head=ns.head,
        scheme=ns.scheme,
        channels=_channels(ns.features),
        epochs=ns.epochs,
        batch_size=ns.batch,
        lr=ns.lr,
        lr_decay=ns.lr_decay,
        l2=ns.l2,
        seed=ns.seed,
        patience=ns.patience,
        max_steps=ns.max_steps,
    )


def _load_featurized(ns: argparse.Namespace, path: str | None, scorer_cache: dict) -> list[dict]:
    """Read a corpus; featurize it in memory when a lexicon is supplied and
    the records do not already carry feature channels."""
    if path is None:
        return []
    records = wikicorpus.read_corpus(path, getattr(ns, "scheme", "bioes"))
    if not records or is_featurized(records[0]) or not getattr(ns, "lexicon", None):
        return records
    lexicon = Lexicon.load(ns.lexicon)
    freq = FreqTable.load(ns.freq, ns.freq_floor) if ns.freq else None
    if "scorer" not in scorer_cache:
        source = ns.mlm_corpus or path
        source_records = records if source == path else wikicorpus.read_corpus(source)
        scorer_cache["scorer"] = NgramMaskedScorer(
            [r["tokens"] for r in source_records], lam=ns.mlm_lambda, k=ns.mlm_k,
        )
    return featurize_records(records, lexicon, freq, scorer_cache["scorer"])


def _load_vocab(ns: argparse.Namespace, corpora: list[list[dict]]) -> FeatureVocab:
    if getattr(ns, "vocab", None):
        return FeatureVocab.load(ns.vocab)
    return FeatureVocab.build([[r["tokens"] for r in c] for c in corpora], ns.cutoff)


def _require_channel_features(records: list[dict], model: crf.CrfModel, name: str) -> None:
    needs = set(model.channels) & {"binary", "tf", "mlm"}
    if needs and records and not is_featurized(records[0]):
        raise DataError(
            f"model uses concept channels {sorted(needs)} but {name} is not featurized; "
            "run `featurize` first"
        )


def _prediction_records(records, results):
    for rec, (tags, spans) in zip(records, results):
        yield {
            "id": rec.get("id", ""),
            "sent_index": rec.get("sent_index", 0),
            "tokens": rec["tokens"],
            "tags": tags,
            "spans": [[s.start, s.end] for s in spans],
        }


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# handlers


def cmd_build_corpus(ns) -> int:
    abbreviations = wikicorpus.load_abbreviations(ns.abbrev) if ns.abbrev else None
    wikicorpus.build_corpus(
        ns.input, ns.format, ns.out, emit=ns.emit, scheme=ns.scheme,
        abbreviations=abbreviations, workers=ns.workers,
    )
    return 0


def cmd_featurize(ns) -> int:
    if not ns.lexicon:
        raise UsageError("missing required option --lexicon")
    records = wikicorpus.read_corpus(ns.corpus)
    featurized = _load_featurized(ns, ns.corpus, {})
    write_jsonl(ns.out, featurized if featurized else records)
    return 0


def cmd_pretrain(ns) -> int:
    corpus = _load_featurized(ns, ns.corpus, {})
    dev = _load_featurized(ns, ns.dev, {}) or None
    vocab_corpora = [corpus]
    if ns.vocab_extra:
        for extra in ns.vocab_extra.split(","):
            vocab_corpora.append(wikicorpus.read_corpus(extra.strip()))
    vocab = _load_vocab(ns, vocab_corpora)
    transfer.pretrain(
        corpus, _train_config(ns), vocab,
        checkpoint_every=ns.checkpoint_every or None,
        outdir=ns.out, dev=dev,
    )
    return 0


def cmd_train(ns, init: crf.CrfModel | None = None) -> int:
    cache: dict = {}
    corpus = _load_featurized(ns, ns.corpus, cache)
    dev = _load_featurized(ns, ns.dev, cache) or None
    if init is None:
        vocab = _load_vocab(ns, [corpus])
        model = crf.train(corpus, dev, _train_config(ns), vocab=vocab)
    else:
        model = crf.train(corpus, dev, _train_config(ns), init=init)
    crf.save_model(model, ns.out)
    return 0


def cmd_finetune(ns) -> int:
    if ns.init and ns.init != "none":
        init = crf.load_model(ns.init)
        return cmd_train(ns, init=init)
    if not ns.vocab:
        raise UsageError("scratch fine-tuning (--init none) requires --vocab")
    return cmd_train(ns)


def cmd_sweep(ns) -> int:
    checkpoints = transfer.load_checkpoints(ns.checkpoints)
    cache: dict = {}
    corpus = _load_featurized(ns, ns.corpus, cache)
    dev = _load_featurized(ns, ns.dev, cache) or None
    test = _load_featurized(ns, ns.test, cache)
    rows = transfer.sweep(checkpoints, corpus, dev, test, _train_config(ns))
    transfer.write_sweep_csv(ns.out, rows)
    return 0


def cmd_predict(ns) -> int:
    model = crf.load_model(ns.model)
    records = wikicorpus.read_corpus(ns.input, model.scheme)
    _require_channel_features(records, model, "--input")
    results = crf.predict(records, model, hard_constraints=ns.hard_constraints)
    out_records = _prediction_records(records, results)
    if ns.out == "-":
        from .util import dumps_compact
        for rec in out_records:
            sys.stdout.write(dumps_compact(rec) + "\n")
    else:
        write_jsonl(ns.out, out_records)
    return 0


def cmd_ensemble(ns) -> int:
    paths = [p.strip() for p in ns.members.split(",") if p.strip()]
    members = []
    for path in paths:
        if not os.path.isfile(path):
            raise DataError(f"missing model file: {path}")
        members.append(crf.load_model(path))
    valid = wikicorpus.read_corpus(ns.valid)
    test = wikicorpus.read_corpus(ns.test)
    for member in members:
        _require_channel_features(valid, member, "--valid")
        _require_channel_features(test, member, "--test")
    rows, voted = ensemble.evaluate_members_and_ensemble(members, paths, valid, test)
    ensemble.write_report(ns.out_report, rows)
    write_jsonl(ns.out_pred, _prediction_records(test, voted))
    return 0


def cmd_eval(ns) -> int:
    gold_records = wikicorpus.read_corpus(ns.gold, ns.scheme)
    pred_records = wikicorpus.read_corpus(ns.pred, ns.scheme)
    gold = [[Span(s, e) for s, e in r.get(ns.gold_field, [])] for r in gold_records]
    pred = [[Span(s, e) for s, e in r.get(ns.pred_field, [])] for r in pred_records]
    tp, fp, fn = evaluation.span_counts(gold, pred)
    prf = evaluation.span_prf(gold, pred)
    _write_json(ns.out, {
        "precision": prf.precision, "recall": prf.recall, "f1": prf.f1,
        "tp": tp, "fp": fp, "fn": fn,
    })
    return 0


def cmd_analyze_scores(ns) -> int:
    if not ns.lexicon:
        raise UsageError("missing required option --lexicon")
    records = wikicorpus.read_corpus(ns.corpus)
    lexicon = Lexicon.load(ns.lexicon)
    freq = FreqTable.load(ns.freq, ns.freq_floor) if ns.freq else None
    source = ns.mlm_corpus or ns.corpus
    source_records = records if source == ns.corpus else wikicorpus.read_corpus(source)
    scorer = NgramMaskedScorer([r["tokens"] for r in source_records], lam=ns.mlm_lambda, k=ns.mlm_k)
    analysis = evaluation.analyze_scores(records, lexicon, freq, scorer, threshold=ns.threshold)
    evaluation.write_score_csv(ns.out, analysis)
    return 0


def cmd_analyze_compare(ns) -> int:
    def read_scores(path):
        import csv
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "f1" not in reader.fieldnames:
                raise DataError(f"{path}: expected a CSV with an 'f1' column")
            return [float(row["f1"]) for row in reader]

    a, b = read_scores(ns.a), read_scores(ns.b)
    result = evaluation.compare_runs(a, b)
    _write_json(ns.out, {"mean_diff": result.mean_diff, "t": result.t, "p": result.p})
    return 0


def cmd_analyze_plot_data(ns) -> int:
    rows = transfer.read_sweep_csv(ns.sweep)
    steps = [s for s, _ in rows]
    f1s = [f for _, f in rows]
    rho = evaluation.spearman(steps, f1s) if len(rows) > 1 else 0.0
    _write_json(ns.out, {
        "points": [{"step": s, "test_f1": f} for s, f in rows],
        "spearman_rho": rho,
    })
    return 0


def cmd_make_benchmark(ns) -> int:
    synthetic.generate_benchmark(
        ns.out, seed=ns.seed,
        wiki_sentences=ns.wiki_sentences,
        target_sentences=ns.target_sentences,
        lexicon_terms=ns.lexicon_terms,
        target_terms=ns.target_terms,
    )
    return 0


HANDLERS: dict[str, Callable] = {
    "build-corpus": cmd_build_corpus,
    "featurize": cmd_featurize,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "sweep": cmd_sweep,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "eval": cmd_eval,
    "analyze scores": cmd_analyze_scores,
    "analyze compare": cmd_analyze_compare,
    "analyze plot-data": cmd_analyze_plot_data,
    "make-benchmark": cmd_make_benchmark,
}


def _usage() -> str:
    names = sorted(COMMANDS)
    return "usage: jargonfinder <command> [options]\ncommands:\n" + "".join(
        f"  {name}\n" for name in names
    )


def main(argv: list[str] | None = None) -> int:
    """Dispatch a subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_usage())
        return 0
    command = argv[0]
    rest = argv[1:]
    if command == "analyze":
        if not rest or f"analyze {rest[0]}" not in COMMANDS:
            sys.stderr.write("usage: jargonfinder analyze scores|compare|plot-data [options]\n")
            return 1
        command = f"analyze {rest[0]}"
        rest = rest[1:]
    if command not in COMMANDS:
        sys.stderr.write(f"unknown command: {command}\n{_usage()}")
        return 1

    try:
        ns = resolve_config(command, rest)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except SystemExit as exc:  # argparse --help exits 0
        return int(exc.code or 0)

    level = ns.log_level or os.environ.get("JF_LOG", "INFO")
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )

    try:
        _log_run(command, ns)
        code = HANDLERS[command](ns)
        if code == 0:
            _write_sidecars(command, ns)
        return code
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (DataError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def entry() -> None:
    sys.exit(main())
