import numpy as np
import pytest

from jargonfinder.crf import CE_HEAD, CrfModel, predict
from jargonfinder.ensemble import (
    WeightedCommittee,
    calibrate,
    evaluate_members_and_ensemble,
    vote,
    write_report,
)
from jargonfinder.sparse import FeatureVocab
from jargonfinder.tagscheme import BIOES, Span, is_valid


def forced_model(vocab, tag_by_token: dict[str, str]) -> CrfModel:
    """CE-head model whose argmax tag per token is forced via identity weights.

    Tokens not listed predict O.
    """
    model = CrfModel.zeros(BIOES, CE_HEAD, (), vocab)
    o_idx = model.labels.index("O")
    model.w[:, o_idx] += 0.5
    for token, tag in tag_by_token.items():
        fid = vocab.feature_id(f"w0={token}")
        model.w[fid, model.labels.index(tag)] = 10.0
    return model


def fixture_vocab(token_lists):
    return FeatureVocab.build([token_lists], cutoff=1)


def test_committee_invariants():
    vocab = fixture_vocab([["aa"]])
    m = forced_model(vocab, {})
    with pytest.raises(ValueError):
        WeightedCommittee([], [])
    with pytest.raises(ValueError):
        WeightedCommittee([m], [-0.1])
    with pytest.raises(ValueError):
        WeightedCommittee([m], [0.5, 0.5])


def test_calibrate_single_member_weight_is_f1():
    records = [{"tokens": ["aa", "bb"], "spans": [[0, 1]], "id": "x", "sent_index": 0}]
    vocab = fixture_vocab([r["tokens"] for r in records])
    perfect = forced_model(vocab, {"aa": "S"})
    committee = calibrate([perfect], records)
    assert committee.weights == [1.0]

    all_o = forced_model(vocab, {})
    committee = calibrate([all_o], records)
    assert committee.weights == [0.0]


def test_calibrate_empty_validation_errors():
    vocab = fixture_vocab([["aa"]])
    with pytest.raises(ValueError):
        calibrate([forced_model(vocab, {})], [])


def test_calibrate_hand_scored_weights():
    # validation: 2 sentences, gold spans on "jj" and "kk jj"
    records = [
        {"tokens": ["jj", "xx", "yy"], "spans": [[0, 1]], "id": "a", "sent_index": 0},
        {"tokens": ["kk", "jj", "zz"], "spans": [[0, 2]], "id": "a", "sent_index": 1},
    ]
    vocab = fixture_vocab([r["tokens"] for r in records])
    # member 1 finds both singletons at "jj": sentence 1 TP on [0,1)? gold there
    # is [0,1), sentence 2 predicts [1,2) against gold [0,2): TP=1 FP=1 FN=1
    m1 = forced_model(vocab, {"jj": "S"})
    # member 2 predicts nothing: F1 0
    m2 = forced_model(vocab, {})
    # member 3 tags kk jj as B,E in sentence 2 and S at jj in sentence 1: all correct
    m3 = forced_model(vocab, {"kk": "B", "jj": "E"})
    # forced (kk->B, jj->E): sentence 1 "jj xx yy" -> E,O,O repairs to span [0,1) = gold
    committee = calibrate([m1, m2, m3], records)
    p1 = 1 / 2
    r1 = 1 / 2
    f1 = 2 * p1 * r1 / (p1 + r1)
    assert committee.weights[0] == pytest.approx(f1)
    assert committee.weights[1] == 0.0
    assert committee.weights[2] == pytest.approx(1.0)


def test_vote_hand_arithmetic_three_tokens():
    records = [{"tokens": ["t1", "t2", "t3"], "spans": [], "id": "a", "sent_index": 0}]
    vocab = fixture_vocab([r["tokens"] for r in records])
    m1 = forced_model(vocab, {"t1": "S"})
    m2 = forced_model(vocab, {"t3": "S"})
    m3 = forced_model(vocab, {"t3": "S"})
    committee = WeightedCommittee([m1, m2, m3], [0.9, 0.1, 0.1])
    (tags, spans), = vote(committee, records)
    # token 0: S scores 0.9 vs O 0.2 -> S; token 2: S scores 0.2 vs O 0.9 -> O
    assert tags == ["S", "O", "O"]
    assert spans == [Span(0, 1)]


def test_vote_single_member_identity():
    records = [{"tokens": ["jj", "xx"], "spans": [], "id": "a", "sent_index": 0}]
    vocab = fixture_vocab([r["tokens"] for r in records])
    member = forced_model(vocab, {"jj": "B", "xx": "E"})
    committee = WeightedCommittee([member], [0.123])
    assert vote(committee, records) == predict(records, member)


def test_vote_identical_members_identity():
    records = [{"tokens": ["jj", "xx", "kk"], "spans": [], "id": "a", "sent_index": 0}]
    vocab = fixture_vocab([r["tokens"] for r in records])
    member = forced_model(vocab, {"jj": "B", "xx": "E", "kk": "S"})
    committee = WeightedCommittee([member, member, member], [0.3, 0.3, 0.3])
    assert vote(committee, records) == predict(records, member)


def test_vote_scale_invariance():
    rng = np.random.default_rng(0)
    tokens = [f"t{i}" for i in range(8)]
    records = [{"tokens": tokens, "spans": [], "id": "a", "sent_index": 0}]
    vocab = fixture_vocab([tokens])
    members = [
        forced_model(vocab, {tokens[i]: rng.choice(["B", "I", "O", "E", "S"]) for i in range(8)})
        for _ in range(4)
    ]
    weights = [0.2, 0.5, 0.1, 0.4]
    a = vote(WeightedCommittee(members, weights), records)
    b = vote(WeightedCommittee(members, [w * 7.3 for w in weights]), records)
    assert a == b


def test_vote_agreement_is_preserved_and_output_valid():
    rng = np.random.default_rng(1)
    tokens = [f"t{i}" for i in range(10)]
    vocab = fixture_vocab([tokens])
    for _ in range(30):
        records = [{"tokens": tokens, "spans": [], "id": "a", "sent_index": 0}]
        assignments = []
        for _ in range(3):
            assignments.append({t: rng.choice(["B", "I", "O", "E", "S"]) for t in tokens})
        # force agreement on a few tokens
        for t in tokens[:4]:
            for asg in assignments[1:]:
                asg[t] = assignments[0][t]
        members = [forced_model(vocab, asg) for asg in assignments]
        committee = WeightedCommittee(members, [0.5, 0.3, 0.2])
        (tags, spans), = vote(committee, records)
        member_tags = [predict(records, m)[0][0] for m in members]
        for i in range(4):
            assert tags[i] == member_tags[0][i]
        # raw voted tags may be invalid; the decoded spans re-encode validly
        from jargonfinder.tagscheme import decode, encode
        assert decode(list(tags), BIOES) == spans
        assert is_valid(encode(spans, len(tokens), BIOES), BIOES)


def test_report_rows_and_determinism(tmp_path):
    records = [
        {"tokens": ["jj", "xx", "yy"], "spans": [[0, 1]], "id": "a", "sent_index": 0},
        {"tokens": ["kk", "jj", "zz"], "spans": [[0, 2]], "id": "a", "sent_index": 1},
    ]
    vocab = fixture_vocab([r["tokens"] for r in records])
    members = [
        forced_model(vocab, {"jj": "S"}),
        forced_model(vocab, {}),
        forced_model(vocab, {"kk": "B", "jj": "E"}),
        forced_model(vocab, {"zz": "S"}),
    ]
    names = [f"m{i}" for i in range(4)]
    rows, voted = evaluate_members_and_ensemble(members, names, records, records)
    assert [r["name"] for r in rows] == names + ["ensemble"]
    p1 = tmp_path / "r1.csv"
    p2 = tmp_path / "r2.csv"
    write_report(str(p1), rows)
    rows2, _ = evaluate_members_and_ensemble(members, names, records, records)
    write_report(str(p2), rows2)
    assert p1.read_bytes() == p2.read_bytes()
    md = tmp_path / "r.md"
    write_report(str(md), rows)
    assert md.read_text().startswith("| name |")
