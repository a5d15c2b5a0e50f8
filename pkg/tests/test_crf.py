import itertools
import math
import random

import numpy as np
import pytest
from scipy.special import logsumexp

from jargonfinder.crf import (
    CE_HEAD,
    CRF_HEAD,
    CrfModel,
    TrainConfig,
    ce_loss_and_gradient,
    emission_table,
    load_model,
    log_partition,
    nll_and_gradient,
    predict,
    prepare_dataset,
    prepare_sentence,
    save_model,
    sequence_score,
    train,
    transition_mask,
    viterbi,
)
from jargonfinder.sparse import FeatureVocab
from jargonfinder.tagscheme import BIO, BIOES, Span, is_valid
from jargonfinder.util import DataError


# ---------------------------------------------------------------------------
# oracles

def brute_force_scores(P, A):
    """Score every label sequence explicitly."""
    n, n_labels = P.shape
    seqs = np.array(list(itertools.product(range(n_labels), repeat=n)), dtype=np.int64)
    scores = P[np.arange(n), seqs].sum(axis=1)
    scores += A[n_labels, seqs[:, 0]] + A[seqs[:, -1], n_labels + 1]
    if n > 1:
        scores += A[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def random_instance(rng, max_n=5, max_labels=5):
    n = rng.integers(1, max_n + 1)
    n_labels = rng.integers(1, max_labels + 1)
    P = rng.normal(size=(n, n_labels))
    A = rng.normal(size=(n_labels + 2, n_labels + 2))
    return P, A


def flatten_params(model):
    return np.concatenate([model.w.ravel(), model.u.ravel(), model.A.ravel()])


def set_params(model, vec):
    sizes = [model.w.size, model.u.size, model.A.size]
    w, u, A = np.split(vec, np.cumsum(sizes)[:-1])
    model.w = w.reshape(model.w.shape).copy()
    model.u = u.reshape(model.u.shape).copy()
    model.A = A.reshape(model.A.shape).copy()


def fd_gradient(loss_fn, batch, model, l2, h=1e-6):
    base = flatten_params(model)
    grad = np.zeros_like(base)
    probe = model.copy()
    for k in range(base.size):
        vec = base.copy()
        vec[k] += h
        set_params(probe, vec)
        up, _ = loss_fn(batch, probe, l2)
        vec[k] -= 2 * h
        set_params(probe, vec)
        down, _ = loss_fn(batch, probe, l2)
        grad[k] = (up - down) / (2 * h)
    return grad


def tiny_model_and_batch(rng, head=CRF_HEAD, scheme=BIOES):
    words = ["aa", "bb", "cc", "dd"]
    sents = [[rng.choice(words) for _ in range(rng.integers(2, 5))] for _ in range(4)]
    vocab = FeatureVocab.build([sents], cutoff=1)
    channels = ("binary", "tf", "mlm")
    model = CrfModel.zeros(scheme, head, channels, vocab)
    n_labels = model.n_labels
    model.w = rng.normal(scale=0.5, size=model.w.shape)
    model.u = rng.normal(scale=0.5, size=model.u.shape)
    model.A = rng.normal(scale=0.5, size=model.A.shape)
    records = []
    for tokens in sents[:2]:
        n = len(tokens)
        start = int(rng.integers(0, n))
        width = int(rng.integers(1, n - start + 1))
        spans = [[start, start + width]]
        binary = np.zeros((n, 5))
        if width == 1:
            binary[start, 4] = 1.0
        else:
            binary[start, 0] = 1.0
            binary[start + 1:start + width - 1, 1] = 1.0
            binary[start + width - 1, 3] = 1.0
        records.append({
            "id": "x", "sent_index": 0, "tokens": tokens, "spans": spans,
            "mentions": spans,
            "mention_tf": [0.4], "mention_mlm": [0.7],
            "binary": binary.tolist(),
            "tf_weighted": (binary * 0.4).tolist(),
            "mlm_weighted": (binary * 0.7).tolist(),
        })
    batch = prepare_dataset(records, vocab, scheme, channels)
    return model, batch


# ---------------------------------------------------------------------------
# emissions

def test_emissions_zero_weights():
    rng = np.random.default_rng(0)
    model, batch = tiny_model_and_batch(rng)
    model.w[:] = 0
    model.u[:] = 0
    P = emission_table(batch[0], model)
    assert np.all(P == 0)


def test_emissions_single_feature():
    vocab = FeatureVocab.build([[["tok"]]], cutoff=1)
    model = CrfModel.zeros(BIOES, CRF_HEAD, (), vocab)
    fid = vocab.feature_id("w0=tok")
    model.w[fid, 0] = 1.0
    prep = prepare_sentence({"tokens": ["tok"], "spans": []}, vocab, BIOES, ())
    P = emission_table(prep, model)
    assert P[0, 0] == 1.0
    assert np.all(P[0, 1:] == 0.0)


def test_emissions_match_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        model, batch = tiny_model_and_batch(rng)
        for prep in batch:
            P = emission_table(prep, model)
            dense = np.zeros((prep.n, len(model.vocab)))
            pos = 0
            for i, c in enumerate(prep.counts):
                for fid in prep.flat_ids[pos:pos + c]:
                    dense[i, fid] += 1.0
                pos += c
            expect = dense @ model.w + prep.weighted @ model.u
            assert np.allclose(P, expect, atol=1e-12)


# ---------------------------------------------------------------------------
# sequence score / viterbi / partition

def test_sequence_score_trivial():
    P = np.zeros((1, 3))
    A = np.zeros((5, 5))
    assert sequence_score(P, A, [1]) == 0.0


def test_sequence_score_hand_case():
    # 2 tokens, 2 labels; start=2, stop=3
    P = np.array([[1.0, 2.0], [3.0, 4.0]])
    A = np.arange(16, dtype=float).reshape(4, 4)
    # y = (1, 0): A[2,1] + P[0,1] + A[1,0] + P[1,0] + A[0,3]
    expect = A[2, 1] + 2.0 + A[1, 0] + 3.0 + A[0, 3]
    assert sequence_score(P, A, [1, 0]) == expect


def test_sequence_score_exp_matches_product_form():
    rng = np.random.default_rng(2)
    P = rng.normal(size=(3, 2)) * 0.1
    A = rng.normal(size=(4, 4)) * 0.1
    y = [0, 1, 1]
    log_s = sequence_score(P, A, y)
    direct = math.exp(A[2, 0]) * math.exp(P[0, 0]) * math.exp(A[0, 1]) * math.exp(P[1, 1]) \
        * math.exp(A[1, 1]) * math.exp(P[2, 1]) * math.exp(A[1, 3])
    assert math.exp(log_s) == pytest.approx(direct, rel=1e-12)


def test_sequence_score_label_out_of_range():
    with pytest.raises(ValueError):
        sequence_score(np.zeros((2, 2)), np.zeros((4, 4)), [0, 5])


def test_viterbi_no_transitions_is_per_token_argmax():
    rng = np.random.default_rng(3)
    P = rng.normal(size=(6, 4))
    A = np.zeros((6, 6))
    assert np.array_equal(viterbi(P, A), P.argmax(axis=1))


def test_viterbi_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(300):
        P, A = random_instance(rng)
        path = viterbi(P, A)
        _, scores = brute_force_scores(P, A)
        assert sequence_score(P, A, path) == pytest.approx(scores.max(), abs=1e-9)


def test_viterbi_blocks_forbidden_transition():
    rng = np.random.default_rng(5)
    # labels: 0=B 1=I 2=O; forbid O->I hard
    for _ in range(50):
        P = rng.normal(size=(7, 3))
        A = np.zeros((5, 5))
        A[2, 1] = -1e9
        path = viterbi(P, A)
        for a, b in zip(path, path[1:]):
            assert not (a == 2 and b == 1)


def test_log_partition_single_token():
    P = np.array([[0.3, -1.2]])
    A = np.zeros((4, 4))
    assert log_partition(P, A) == pytest.approx(logsumexp(P[0]), abs=1e-12)


def test_log_partition_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(300):
        P, A = random_instance(rng)
        _, scores = brute_force_scores(P, A)
        assert log_partition(P, A) == pytest.approx(logsumexp(scores), abs=1e-9)


def test_log_partition_dominates_any_sequence():
    rng = np.random.default_rng(7)
    for _ in range(50):
        P, A = random_instance(rng)
        seqs, scores = brute_force_scores(P, A)
        assert log_partition(P, A) >= scores.max() - 1e-12


def test_shift_invariance():
    rng = np.random.default_rng(8)
    P, A = random_instance(rng, max_n=4, max_labels=4)
    row = 0 if P.shape[0] else 0
    shifted = P.copy()
    shifted[row] += 3.7
    assert log_partition(shifted, A) == pytest.approx(log_partition(P, A) + 3.7, abs=1e-9)
    assert np.array_equal(viterbi(shifted, A), viterbi(P, A))


# ---------------------------------------------------------------------------
# losses and gradients

def test_nll_zero_when_gold_certain():
    vocab = FeatureVocab.build([[["aa", "bb"]]], cutoff=1)
    model = CrfModel.zeros(BIOES, CRF_HEAD, (), vocab)
    records = [{"tokens": ["aa", "bb"], "spans": []}]
    batch = prepare_dataset(records, vocab, BIOES, ())
    # push P for gold label O extremely high: prob(gold) ~= 1
    fid_a = vocab.feature_id("w0=aa")
    fid_b = vocab.feature_id("w0=bb")
    o_idx = model.labels.index("O")
    model.w[fid_a, o_idx] = 60.0
    model.w[fid_b, o_idx] = 60.0
    loss, grads = nll_and_gradient(batch, model, l2=0.0)
    assert loss == pytest.approx(0.0, abs=1e-9)
    assert np.max(np.abs(grads.w)) < 1e-9
    assert np.max(np.abs(grads.A)) < 1e-9
    # with l2, loss is exactly the ridge term and data gradient stays ~0
    loss_l2, _ = nll_and_gradient(batch, model, l2=0.01)
    assert loss_l2 == pytest.approx(0.005 * float(np.sum(model.w ** 2)), rel=1e-9)


def test_nll_nonnegative_without_l2():
    rng = np.random.default_rng(9)
    for _ in range(20):
        model, batch = tiny_model_and_batch(rng)
        loss, _ = nll_and_gradient(batch, model, l2=0.0)
        assert loss >= -1e-12


def test_nll_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    for _ in range(8):
        model, batch = tiny_model_and_batch(rng)
        l2 = float(rng.uniform(0, 0.1))
        _, grads = nll_and_gradient(batch, model, l2)
        analytic = np.concatenate([grads.w.ravel(), grads.u.ravel(), grads.A.ravel()])
        numeric = fd_gradient(nll_and_gradient, batch, model, l2)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-5


def test_ce_loss_zero_when_one_hot_correct():
    vocab = FeatureVocab.build([[["aa"]]], cutoff=1)
    model = CrfModel.zeros(BIOES, CE_HEAD, (), vocab)
    records = [{"tokens": ["aa"], "spans": []}]
    batch = prepare_dataset(records, vocab, BIOES, ())
    model.w[vocab.feature_id("w0=aa"), model.labels.index("O")] = 80.0
    loss, _ = ce_loss_and_gradient(batch, model)
    assert loss == pytest.approx(0.0, abs=1e-9)


def test_ce_uniform_predictions_hand_value():
    vocab = FeatureVocab.build([[["aa", "bb"]]], cutoff=1)
    model = CrfModel.zeros(BIOES, CE_HEAD, (), vocab)
    records = [{"tokens": ["aa", "bb"], "spans": []}]
    batch = prepare_dataset(records, vocab, BIOES, ())
    loss, _ = ce_loss_and_gradient(batch, model)
    # zero weights -> uniform over C=5; loss = (log C) / C per the 1/(N*S*C) averaging
    assert loss == pytest.approx(math.log(5) / 5, rel=1e-12)


def test_ce_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(8):
        model, batch = tiny_model_and_batch(rng, head=CE_HEAD)
        l2 = float(rng.uniform(0, 0.1))
        _, grads = ce_loss_and_gradient(batch, model, l2)
        analytic = np.concatenate([grads.w.ravel(), grads.u.ravel(), grads.A.ravel()])
        numeric = fd_gradient(ce_loss_and_gradient, batch, model, l2)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-5


def test_full_batch_loss_nonincreasing_small_step():
    rng = np.random.default_rng(12)
    model, batch = tiny_model_and_batch(rng)
    losses = []
    for _ in range(25):
        loss, grads = nll_and_gradient(batch, model, l2=0.0)
        losses.append(loss)
        model.w -= 0.05 * grads.w
        model.u -= 0.05 * grads.u
        model.A -= 0.05 * grads.A
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


# ---------------------------------------------------------------------------
# training and prediction

def separable_records(n_sentences, rng, jargon=("zyxa", "zyxb"), pair=("qrsa", "qrsb")):
    common = ["the", "cat", "sat", "on", "mat", "dog", "ran"]
    records = []
    for idx in range(n_sentences):
        tokens = [rng.choice(common) for _ in range(rng.integers(3, 6))]
        spans = []
        roll = rng.random()
        if roll < 0.4:
            pos = int(rng.integers(0, len(tokens) + 1))
            tokens[pos:pos] = list(pair)
            spans.append([pos, pos + 2])
        elif roll < 0.8:
            pos = int(rng.integers(0, len(tokens) + 1))
            tokens.insert(pos, str(rng.choice(list(jargon))))
            spans.append([pos, pos + 1])
        records.append({"id": "s", "sent_index": idx, "tokens": tokens, "spans": spans})
    return records


def test_train_separable_reaches_perfect_dev_f1():
    rng = np.random.default_rng(13)
    train_recs = separable_records(80, rng)
    dev_recs = separable_records(30, rng)
    vocab = FeatureVocab.build([[r["tokens"] for r in train_recs]])
    config = TrainConfig(head=CRF_HEAD, epochs=20, batch_size=8, lr=0.5, seed=0)
    model = train(train_recs, dev_recs, config, vocab=vocab)
    from jargonfinder.crf import dev_f1 as eval_f1
    prepared = prepare_dataset(dev_recs, vocab, BIOES, ())
    assert eval_f1(model, prepared) == 1.0


def test_train_zero_epochs_returns_zero_model():
    rng = np.random.default_rng(14)
    recs = separable_records(10, rng)
    vocab = FeatureVocab.build([[r["tokens"] for r in recs]])
    model = train(recs, None, TrainConfig(epochs=0), vocab=vocab)
    assert np.all(model.w == 0) and np.all(model.u == 0) and np.all(model.A == 0)


def test_train_empty_dataset_errors():
    with pytest.raises(ValueError):
        train([], None, TrainConfig())


def test_train_same_seed_byte_identical(tmp_path):
    rng = np.random.default_rng(15)
    recs = separable_records(30, rng)
    dev = separable_records(10, rng)
    vocab = FeatureVocab.build([[r["tokens"] for r in recs]])
    paths = []
    for name in ("m1.jfmd", "m2.jfmd"):
        config = TrainConfig(epochs=3, batch_size=8, lr=0.3, seed=7)
        model = train(recs, dev, config, vocab=vocab)
        p = tmp_path / name
        save_model(model, str(p))
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]


def test_predict_empty_and_recovers_planted():
    rng = np.random.default_rng(16)
    recs = separable_records(60, rng)
    vocab = FeatureVocab.build([[r["tokens"] for r in recs]])
    model = train(recs, None, TrainConfig(epochs=15, batch_size=8, lr=0.5), vocab=vocab)
    assert predict([], model) == []
    results = predict(recs, model)
    for rec, (tags, spans) in zip(recs, results):
        assert [[s.start, s.end] for s in spans] == rec["spans"]


def test_hard_constraints_outputs_always_valid():
    rng = np.random.default_rng(17)
    for scheme in (BIOES, BIO):
        vocab = FeatureVocab.build([[["aa", "bb"]]], cutoff=1)
        model = CrfModel.zeros(scheme, CRF_HEAD, (), vocab)
        mask = transition_mask(scheme)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            P = rng.normal(scale=3.0, size=(n, model.n_labels))
            model.A = rng.normal(scale=2.0, size=model.A.shape)
            path = viterbi(P, model.A + mask)
            tags = [model.labels[k] for k in path]
            assert is_valid(tags, scheme), (scheme, tags)


def test_ce_head_predicts_by_argmax_and_repairs():
    vocab = FeatureVocab.build([[["aa", "bb"]]], cutoff=1)
    model = CrfModel.zeros(BIOES, CE_HEAD, (), vocab)
    # force tags (I, E) via identity weights: repair turns orphan I into a span
    i_idx = model.labels.index("I")
    e_idx = model.labels.index("E")
    model.w[vocab.feature_id("w0=aa"), i_idx] = 5.0
    model.w[vocab.feature_id("w0=bb"), e_idx] = 5.0
    (tags, spans), = predict([{"tokens": ["aa", "bb"], "spans": []}], model)
    assert tags == ["I", "E"]
    assert spans == [Span(0, 2)]


# ---------------------------------------------------------------------------
# model io

def test_model_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(18)
    recs = separable_records(30, rng)
    vocab = FeatureVocab.build([[r["tokens"] for r in recs]])
    model = train(recs, None, TrainConfig(epochs=3, batch_size=8), vocab=vocab)
    path = tmp_path / "model.jfmd"
    save_model(model, str(path))
    loaded = load_model(str(path))
    assert loaded.labels == model.labels
    assert loaded.scheme == model.scheme
    assert np.array_equal(loaded.w, model.w)
    assert np.array_equal(loaded.u, model.u)
    assert np.array_equal(loaded.A, model.A)
    assert predict(recs[:5], loaded) == predict(recs[:5], model)


def test_model_magic_bytes(tmp_path):
    rng = np.random.default_rng(19)
    recs = separable_records(10, rng)
    vocab = FeatureVocab.build([[r["tokens"] for r in recs]])
    model = train(recs, None, TrainConfig(epochs=1), vocab=vocab)
    path = tmp_path / "model.jfmd"
    save_model(model, str(path))
    assert path.read_bytes()[:5] == b"JFMD1"


def test_model_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jfmd"
    path.write_bytes(b"NOTAMODEL")
    with pytest.raises(DataError):
        load_model(str(path))
