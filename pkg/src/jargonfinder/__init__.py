"""Sequence-labeling toolkit for extracting difficult terms from text.

Pipeline: hyperlink-span corpus construction from wikitext, dictionary /
term-frequency / masked-LM auxiliary features, linear-chain CRF tagging with
Viterbi decoding, transfer learning from hyperlink spans to a target jargon
task, and weighted-voting ensembling.
"""

from .crf import (
    CrfModel,
    TrainConfig,
    load_model,
    predict,
    save_model,
    train,
    viterbi,
)
from .ensemble import WeightedCommittee, calibrate, vote
from .evaluation import analyze_scores, compare_runs, span_prf
from .lexfeatures import (
    FeatureBundle,
    FreqTable,
    Lexicon,
    NgramMaskedScorer,
    build_features,
    featurize_records,
    match_concepts,
    minmax,
    mlm_score,
    tf_score,
)
from .sparse import FeatureVocab
from .synthetic import generate_benchmark
from .tagscheme import BIO, BIOES, Span, decode, encode, resolve_overlaps
from .transfer import build_shared_vocab, finetune, pretrain, sweep
from .util import DataError
from .wikicorpus import build_corpus, parse_links, read_corpus, split_sentences, tokenize

__version__ = "0.1.0"

__all__ = [
    "BIO", "BIOES", "CrfModel", "DataError", "FeatureBundle", "FeatureVocab",
    "FreqTable", "Lexicon", "NgramMaskedScorer", "Span", "TrainConfig",
    "WeightedCommittee", "analyze_scores", "build_corpus", "build_features",
    "build_shared_vocab", "calibrate", "compare_runs", "decode", "encode",
    "featurize_records", "finetune", "generate_benchmark", "load_model",
    "match_concepts", "minmax", "mlm_score", "parse_links", "predict",
    "pretrain", "read_corpus", "resolve_overlaps", "save_model", "span_prf",
    "split_sentences", "sweep", "tf_score", "tokenize", "train", "viterbi",
    "vote",
]
