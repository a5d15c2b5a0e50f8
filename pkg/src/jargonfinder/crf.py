"""Linear-chain CRF tagger over sparse lexical features and concept channels.

Emission scores fuse two paths: a base path where sparse template features
and the binary concept-channel dims share one weight matrix, and a weighted
path where the TF/MLM-weighted channel dims enter through their own weights.
Sequence scores add label-transition scores (with virtual start/stop states)
to the per-token emissions; everything is computed in log space.  Training
minimizes either the sequence negative log likelihood (forward-backward
gradients) or a per-token cross-entropy that ignores transitions, with plain
decayed-step mini-batch gradient descent for exact reproducibility.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import evaluation
from .lexfeatures import is_featurized
from .sparse import FEATURE_SPEC_VERSION, FeatureVocab, TEMPLATES
from .tagscheme import BIOES, Span, decode, encode, scheme_labels
from .util import DataError

log = logging.getLogger("jargonfinder.crf")

CHANNELS = ("binary", "tf", "mlm")
N_WEIGHTED = 10  # tf (5 dims) + mlm (5 dims)
HARD_PENALTY = -1e30

CRF_HEAD = "crf"
CE_HEAD = "ce"


def _lse(arr: np.ndarray, axis: int) -> np.ndarray:
    """Stable log-sum-exp over one axis (scipy's adds too much call overhead
    for the tiny per-position matrices used here)."""
    m = arr.max(axis=axis, keepdims=True)
    return np.log(np.exp(arr - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


def _lse1(vec: np.ndarray) -> float:
    m = vec.max()
    return float(np.log(np.exp(vec - m).sum()) + m)


def config_hash(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class CrfModel:
    labels: tuple[str, ...]
    scheme: str
    head: str
    channels: tuple[str, ...]
    vocab: FeatureVocab
    w: np.ndarray  # (vocab size, L): sparse features + binary channel dims
    u: np.ndarray  # (10, L): tf/mlm weighted channel dims
    A: np.ndarray  # (L+2, L+2): transitions with virtual start row / stop column
    config: dict = field(default_factory=dict)
    feature_spec_version: int = FEATURE_SPEC_VERSION

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def start(self) -> int:
        return len(self.labels)

    @property
    def stop(self) -> int:
        return len(self.labels) + 1

    @classmethod
    def zeros(cls, scheme: str, head: str, channels: Sequence[str], vocab: FeatureVocab,
              config: dict | None = None) -> "CrfModel":
        labels = scheme_labels(scheme)
        bad = [c for c in channels if c not in CHANNELS]
        if bad:
            raise ValueError(f"unknown channels: {bad}")
        n = len(labels)
        return cls(
            labels=labels,
            scheme=scheme,
            head=head,
            channels=tuple(channels),
            vocab=vocab,
            w=np.zeros((len(vocab), n)),
            u=np.zeros((N_WEIGHTED, n)),
            A=np.zeros((n + 2, n + 2)),
            config=dict(config or {}),
        )

    def copy(self) -> "CrfModel":
        return CrfModel(
            labels=self.labels,
            scheme=self.scheme,
            head=self.head,
            channels=self.channels,
            vocab=self.vocab,
            w=self.w.copy(),
            u=self.u.copy(),
            A=self.A.copy(),
            config=copy.deepcopy(self.config),
            feature_spec_version=self.feature_spec_version,
        )


# ---------------------------------------------------------------------------
# dataset preparation


@dataclass
class PreparedSentence:
    n: int
    flat_ids: np.ndarray       # concatenated feature ids over tokens
    offsets: np.ndarray        # start offset of each token's ids in flat_ids
    counts: np.ndarray         # ids per token
    weighted: np.ndarray       # (n, 10) tf/mlm channel values (masked per model)
    gold: np.ndarray | None    # (n,) label indices, None at predict time


def prepare_sentence(record: dict, vocab: FeatureVocab, scheme: str,
                     channels: Sequence[str], with_gold: bool = True) -> PreparedSentence:
    tokens = record["tokens"]
    n = len(tokens)
    per_token = vocab.encode_tokens(tokens)

    weighted = np.zeros((n, N_WEIGHTED))
    if is_featurized(record):
        binary = np.asarray(record["binary"], dtype=np.float64).reshape(n, 5)
        if "binary" in channels:
            chan_ids = vocab.channel_ids
            for i in range(n):
                row = binary[i]
                if row.any():
                    per_token[i] = per_token[i] + [int(chan_ids[d]) for d in np.nonzero(row)[0]]
        if "tf" in channels:
            weighted[:, :5] = np.asarray(record["tf_weighted"], dtype=np.float64).reshape(n, 5)
        if "mlm" in channels:
            weighted[:, 5:] = np.asarray(record["mlm_weighted"], dtype=np.float64).reshape(n, 5)

    gold = None
    if with_gold:
        spans = [Span(s, e) for s, e in record.get("spans", [])]
        tags = encode(spans, n, scheme)
        label_index = {lab: k for k, lab in enumerate(scheme_labels(scheme))}
        gold = np.array([label_index[t] for t in tags], dtype=np.int64)

    counts = np.array([len(ids) for ids in per_token], dtype=np.int64)
    offsets = np.zeros(n, dtype=np.int64)
    if n > 1:
        np.cumsum(counts[:-1], out=offsets[1:])
    flat = np.concatenate([np.asarray(ids, dtype=np.int64) for ids in per_token]) if n else np.zeros(0, np.int64)
    return PreparedSentence(n, flat, offsets, counts, weighted, gold)


def prepare_dataset(records: Sequence[dict], vocab: FeatureVocab, scheme: str,
                    channels: Sequence[str], with_gold: bool = True) -> list[PreparedSentence]:
    return [prepare_sentence(r, vocab, scheme, channels, with_gold) for r in records]


# ---------------------------------------------------------------------------
# scoring


def emission_table(prep: PreparedSentence, model: CrfModel) -> np.ndarray:
    """P[i, y]: base sparse-feature scores plus weighted-channel scores."""
    if prep.n == 0:
        return np.zeros((0, model.n_labels))
    if prep.flat_ids.size and prep.flat_ids.max() >= model.w.shape[0]:
        raise ValueError("feature id exceeds model vocabulary")
    rows = model.w[prep.flat_ids]
    P = np.add.reduceat(rows, prep.offsets, axis=0)
    P += prep.weighted @ model.u
    return P


def sequence_score(P: np.ndarray, A: np.ndarray, y: Sequence[int]) -> float:
    """Log-space score: start/stop and label-pair transitions plus emissions."""
    n, n_labels = P.shape
    start, stop = n_labels, n_labels + 1
    y = np.asarray(y, dtype=np.int64)
    if len(y) != n:
        raise ValueError(f"label sequence length {len(y)} != {n} tokens")
    if n == 0:
        return 0.0
    if y.min() < 0 or y.max() >= n_labels:
        raise ValueError("label index out of range")
    score = A[start, y[0]] + A[y[-1], stop]
    score += P[np.arange(n), y].sum()
    if n > 1:
        score += A[y[:-1], y[1:]].sum()
    return float(score)


def viterbi(P: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Highest-scoring label sequence; ties break to the lowest label index."""
    n, n_labels = P.shape
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    start, stop = n_labels, n_labels + 1
    inner = A[:n_labels, :n_labels]
    delta = A[start, :n_labels] + P[0]
    back = np.zeros((n, n_labels), dtype=np.int64)
    for i in range(1, n):
        scores = delta[:, None] + inner
        back[i] = np.argmax(scores, axis=0)
        delta = scores[back[i], np.arange(n_labels)] + P[i]
    delta = delta + A[:n_labels, stop]
    path = np.zeros(n, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path


def log_partition(P: np.ndarray, A: np.ndarray) -> float:
    """log sum over all label sequences of exp(sequence score), forward pass."""
    n, n_labels = P.shape
    if n == 0:
        return 0.0
    start, stop = n_labels, n_labels + 1
    inner = A[:n_labels, :n_labels]
    alpha = A[start, :n_labels] + P[0]
    for i in range(1, n):
        alpha = _lse(alpha[:, None] + inner, axis=0) + P[i]
    return _lse1(alpha + A[:n_labels, stop])


def _forward_backward(P: np.ndarray, A: np.ndarray):
    """Returns (logZ, unary marginals (n,L), pairwise marginals (n-1,L,L))."""
    n, n_labels = P.shape
    start, stop = n_labels, n_labels + 1
    inner = A[:n_labels, :n_labels]

    alpha = np.zeros((n, n_labels))
    alpha[0] = A[start, :n_labels] + P[0]
    for i in range(1, n):
        alpha[i] = _lse(alpha[i - 1][:, None] + inner, axis=0) + P[i]

    beta = np.zeros((n, n_labels))
    beta[-1] = A[:n_labels, stop]
    for i in range(n - 2, -1, -1):
        beta[i] = _lse(inner + (P[i + 1] + beta[i + 1])[None, :], axis=1)

    log_z = _lse1(alpha[-1] + beta[-1])
    unary = np.exp(alpha + beta - log_z)
    if n > 1:
        pair = np.exp(
            alpha[:-1, :, None] + inner[None, :, :]
            + (P[1:] + beta[1:])[:, None, :] - log_z
        )
    else:
        pair = np.zeros((0, n_labels, n_labels))
    return log_z, unary, pair


# ---------------------------------------------------------------------------
# losses and gradients


@dataclass
class Gradients:
    w: np.ndarray
    u: np.ndarray
    A: np.ndarray


def _zero_grads(model: CrfModel) -> Gradients:
    return Gradients(np.zeros_like(model.w), np.zeros_like(model.u), np.zeros_like(model.A))


def _chain_to_params(prep: PreparedSentence, grad_P: np.ndarray, grads: Gradients) -> None:
    np.add.at(grads.w, prep.flat_ids, np.repeat(grad_P, prep.counts, axis=0))
    grads.u += prep.weighted.T @ grad_P


def _add_l2(model: CrfModel, grads: Gradients, l2: float) -> float:
    if l2 == 0.0:
        return 0.0
    grads.w += l2 * model.w
    grads.u += l2 * model.u
    grads.A += l2 * model.A
    return 0.5 * l2 * (
        float(np.sum(model.w ** 2)) + float(np.sum(model.u ** 2)) + float(np.sum(model.A ** 2))
    )


def nll_and_gradient(batch: Sequence[PreparedSentence], model: CrfModel,
                     l2: float = 0.0) -> tuple[float, Gradients]:
    """Sequence NLL summed over the batch; gradients are expected minus
    observed feature counts from forward-backward marginals."""
    n_labels = model.n_labels
    start, stop = model.start, model.stop
    grads = _zero_grads(model)
    loss = 0.0
    for prep in batch:
        if prep.gold is None:
            raise ValueError("training sentence lacks gold labels")
        if prep.n == 0:
            continue
        P = emission_table(prep, model)
        log_z, unary, pair = _forward_backward(P, model.A)
        gold = prep.gold
        loss += log_z - sequence_score(P, model.A, gold)

        grad_P = unary.copy()
        grad_P[np.arange(prep.n), gold] -= 1.0
        _chain_to_params(prep, grad_P, grads)

        grads.A[start, :n_labels] += unary[0]
        grads.A[start, gold[0]] -= 1.0
        grads.A[:n_labels, stop] += unary[-1]
        grads.A[gold[-1], stop] -= 1.0
        if prep.n > 1:
            grads.A[:n_labels, :n_labels] += pair.sum(axis=0)
            np.add.at(grads.A, (gold[:-1], gold[1:]), -1.0)
    loss += _add_l2(model, grads, l2)
    return loss, grads


def ce_loss_and_gradient(batch: Sequence[PreparedSentence], model: CrfModel,
                         l2: float = 0.0) -> tuple[float, Gradients]:
    """Per-token cross-entropy, averaged over tokens and label count;
    transitions are ignored by this head."""
    n_labels = model.n_labels
    grads = _zero_grads(model)
    total_tokens = sum(p.n for p in batch)
    if total_tokens == 0:
        return _add_l2(model, grads, l2), grads
    scale = 1.0 / (total_tokens * n_labels)
    loss = 0.0
    for prep in batch:
        if prep.gold is None:
            raise ValueError("training sentence lacks gold labels")
        if prep.n == 0:
            continue
        P = emission_table(prep, model)
        shifted = P - P.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss += -log_probs[np.arange(prep.n), prep.gold].sum() * scale
        grad_P = np.exp(log_probs)
        grad_P[np.arange(prep.n), prep.gold] -= 1.0
        grad_P *= scale
        _chain_to_params(prep, grad_P, grads)
    loss += _add_l2(model, grads, l2)
    return loss, grads


LOSS_FUNCTIONS: dict[str, Callable] = {CRF_HEAD: nll_and_gradient, CE_HEAD: ce_loss_and_gradient}


# ---------------------------------------------------------------------------
# decoding / prediction


def transition_mask(scheme: str) -> np.ndarray:
    """(L+2, L+2) additive penalties that forbid structurally invalid moves."""
    labels = scheme_labels(scheme)
    n = len(labels)
    idx = {lab: k for k, lab in enumerate(labels)}
    start, stop = n, n + 1
    mask = np.full((n + 2, n + 2), HARD_PENALTY)
    if scheme == BIOES:
        allowed = {
            "B": ("I", "E"), "I": ("I", "E"),
            "E": ("B", "O", "S"), "S": ("B", "O", "S"), "O": ("B", "O", "S"),
        }
        starts = ("B", "O", "S")
        stops = ("E", "S", "O")
    else:
        allowed = {"B": ("B", "I", "O"), "I": ("B", "I", "O"), "O": ("B", "O")}
        starts = ("B", "O")
        stops = labels
    for src, dsts in allowed.items():
        for dst in dsts:
            mask[idx[src], idx[dst]] = 0.0
    for lab in starts:
        mask[start, idx[lab]] = 0.0
    for lab in stops:
        mask[idx[lab], stop] = 0.0
    return mask


def decode_emissions(P: np.ndarray, model: CrfModel,
                     hard_constraints: bool = False) -> tuple[list[str], list[Span]]:
    if model.head == CRF_HEAD:
        A = model.A + transition_mask(model.scheme) if hard_constraints else model.A
        path = viterbi(P, A)
    else:
        path = np.argmax(P, axis=1)
    tags = [model.labels[k] for k in path]
    return tags, decode(tags, model.scheme)


def predict(records: Sequence[dict], model: CrfModel,
            hard_constraints: bool = False) -> list[tuple[list[str], list[Span]]]:
    """Decode sentences with the model's head (Viterbi for the sequence head,
    per-token argmax plus repair for the cross-entropy head)."""
    if model.feature_spec_version != FEATURE_SPEC_VERSION:
        raise DataError(
            f"model feature spec version {model.feature_spec_version} does not match "
            f"library version {FEATURE_SPEC_VERSION}"
        )
    out = []
    for record in records:
        prep = prepare_sentence(record, model.vocab, model.scheme, model.channels, with_gold=False)
        P = emission_table(prep, model)
        out.append(decode_emissions(P, model, hard_constraints))
    return out


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    head: str = CRF_HEAD
    scheme: str = BIOES
    channels: tuple[str, ...] = ()
    epochs: int = 5
    batch_size: int = 32
    lr: float = 0.5
    lr_decay: float = 200.0  # step size eta_t = lr / (1 + t / lr_decay)
    l2: float = 0.0
    seed: int = 0
    patience: int = 0        # epochs without dev improvement before stopping; 0 disables
    max_steps: int | None = None

    def as_dict(self) -> dict:
        return {
            "head": self.head, "scheme": self.scheme, "channels": list(self.channels),
            "epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
            "lr_decay": self.lr_decay, "l2": self.l2, "seed": self.seed,
            "patience": self.patience, "max_steps": self.max_steps,
        }


def dev_f1(model: CrfModel, dev_prepared: Sequence[PreparedSentence]) -> float:
    gold, pred = [], []
    for prep in dev_prepared:
        P = emission_table(prep, model)
        _, spans = decode_emissions(P, model)
        pred.append(spans)
        gold.append(decode([model.labels[k] for k in prep.gold], model.scheme))
    return evaluation.span_prf(gold, pred).f1


def train(
    train_records: Sequence[dict],
    dev_records: Sequence[dict] | None,
    config: TrainConfig,
    vocab: FeatureVocab | None = None,
    init: CrfModel | None = None,
    checkpoint_every: int | None = None,
    checkpoint_cb: Callable[[int, CrfModel], None] | None = None,
) -> CrfModel:
    """Mini-batch gradient descent with a decayed step size and seeded
    shuffling; returns the best-dev checkpoint (final model if no dev set).

    Warm starts copy every parameter group from ``init`` and inherit its
    feature vocabulary; a re-supplied vocabulary must hash-match it.
    """
    if not train_records:
        raise ValueError("empty training dataset")
    if init is not None:
        if vocab is not None and vocab.sha256() != init.vocab.sha256():
            raise DataError("init model vocabulary does not match the supplied vocabulary")
        if init.scheme != config.scheme:
            raise DataError(f"init model scheme {init.scheme!r} != config scheme {config.scheme!r}")
        model = init.copy()
        model.head = config.head
        model.channels = tuple(config.channels)
        model.config = config.as_dict()
        vocab = init.vocab
    else:
        if vocab is None:
            vocab = FeatureVocab.build([[r["tokens"] for r in train_records]])
        model = CrfModel.zeros(config.scheme, config.head, config.channels, vocab,
                               config.as_dict())

    prepared = prepare_dataset(train_records, vocab, config.scheme, config.channels)
    dev_prepared = (
        prepare_dataset(dev_records, vocab, config.scheme, config.channels)
        if dev_records else None
    )
    loss_fn = LOSS_FUNCTIONS[config.head]
    rng = np.random.default_rng(config.seed)

    step = 0
    if checkpoint_cb is not None and checkpoint_every:
        checkpoint_cb(0, model)

    best_f1 = -1.0
    best_model: CrfModel | None = None
    epochs_since_best = 0
    done = False

    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        for lo in range(0, len(order), config.batch_size):
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
            batch = [prepared[k] for k in order[lo:lo + config.batch_size]]
            loss, grads = loss_fn(batch, model, config.l2)
            eta = config.lr / (1.0 + step / config.lr_decay)
            model.w -= eta * grads.w
            model.u -= eta * grads.u
            model.A -= eta * grads.A
            step += 1
            if checkpoint_cb is not None and checkpoint_every and step % checkpoint_every == 0:
                checkpoint_cb(step, model)
        if dev_prepared is not None:
            f1 = dev_f1(model, dev_prepared)
            log.info("epoch %d: step %d dev F1 %.4f", epoch, step, f1)
            if f1 > best_f1:
                best_f1 = f1
                best_model = model.copy()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if config.patience and epochs_since_best >= config.patience:
                    break
        if done:
            break

    return best_model if best_model is not None else model


# ---------------------------------------------------------------------------
# model file io

MAGIC = b"JFMD1"
_ARRAY_NAMES = ("w", "u", "A")


def save_model(model: CrfModel, path: str) -> None:
    """Container: magic, length-prefixed JSON header, then named float64
    little-endian arrays (w, u, A), each with a length prefix."""
    header = {
        "format": 1,
        "feature_spec_version": model.feature_spec_version,
        "labels": list(model.labels),
        "scheme": model.scheme,
        "head": model.head,
        "channels": list(model.channels),
        "templates": list(TEMPLATES),
        "vocab": model.vocab.features,
        "vocab_cutoff": model.vocab.cutoff,
        "vocab_sha256": model.vocab.sha256(),
        "config": model.config,
        "config_sha256": config_hash(model.config),
        "shapes": {name: list(getattr(model, name).shape) for name in _ARRAY_NAMES},
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    raw = payload.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for name in _ARRAY_NAMES:
            arr = np.ascontiguousarray(getattr(model, name), dtype="<f8")
            blob = arr.tobytes()
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", arr.size))
            fh.write(blob)


def load_model(path: str) -> CrfModel:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    with fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not a model file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("feature_spec_version") != FEATURE_SPEC_VERSION:
            raise DataError(
                f"{path}: feature spec version {header.get('feature_spec_version')} "
                f"does not match library version {FEATURE_SPEC_VERSION}"
            )
        arrays = {}
        for expected in _ARRAY_NAMES:
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            if name != expected:
                raise DataError(f"{path}: expected array {expected!r}, found {name!r}")
            (count,) = struct.unpack("<Q", fh.read(8))
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise DataError(f"{path}: truncated array {name!r}")
            shape = tuple(header["shapes"][name])
            arrays[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    vocab = FeatureVocab(header["vocab"], header.get("vocab_cutoff", 2))
    if vocab.sha256() != header["vocab_sha256"]:
        raise DataError(f"{path}: vocabulary hash mismatch")
    return CrfModel(
        labels=tuple(header["labels"]),
        scheme=header["scheme"],
        head=header["head"],
        channels=tuple(header["channels"]),
        vocab=vocab,
        w=arrays["w"],
        u=arrays["u"],
        A=arrays["A"],
        config=header["config"],
        feature_spec_version=header["feature_spec_version"],
    )
