import json
import os

import pytest

from jargonfinder.cli import main
from jargonfinder.wikicorpus import read_corpus


def run(args):
    return main(args)


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "commands" in capsys.readouterr().out


def test_unknown_command_exits_one(capsys):
    assert run(["frobnicate"]) == 1


def test_missing_required_flag_named(capsys):
    assert run(["train"]) == 1
    err = capsys.readouterr().err
    assert "--corpus" in err


def test_unknown_flag_exits_one(capsys):
    assert run(["eval", "--nope", "x"]) == 1


@pytest.fixture()
def small_pipeline(tmp_path):
    """Generated mini benchmark plus a built wiki corpus."""
    bench = tmp_path / "bench"
    assert run(["make-benchmark", "--out", str(bench), "--seed", "0",
                "--wiki-sentences", "400", "--target-sentences", "200",
                "--lexicon-terms", "80", "--target-terms", "40"]) == 0
    wiki_corpus = tmp_path / "wiki_corpus.jsonl"
    assert run(["build-corpus", "--input", str(bench / "wiki.jsonl"),
                "--out", str(wiki_corpus)]) == 0
    return bench, wiki_corpus, tmp_path


def test_build_corpus_conll_and_workers(small_pipeline, tmp_path):
    bench, _, _ = small_pipeline
    out1 = tmp_path / "c1.conll"
    out2 = tmp_path / "c2.conll"
    assert run(["build-corpus", "--input", str(bench / "wiki.jsonl"),
                "--out", str(out1), "--emit", "conll"]) == 0
    assert run(["build-corpus", "--input", str(bench / "wiki.jsonl"),
                "--out", str(out2), "--emit", "conll", "--workers", "2"]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_featurize_and_eval_lexicon_baseline(small_pipeline, tmp_path):
    bench, _, _ = small_pipeline
    feat = tmp_path / "target.feat.jsonl"
    assert run(["featurize", "--corpus", str(bench / "target.test.jsonl"),
                "--lexicon", str(bench / "lexicon.txt"),
                "--freq", str(bench / "freqs.tsv"),
                "--mlm-corpus", str(bench / "target.train.jsonl"),
                "--out", str(feat)]) == 0
    recs = read_corpus(str(feat))
    assert "binary" in recs[0] and "mentions" in recs[0]

    out = tmp_path / "baseline.json"
    assert run(["eval", "--gold", str(bench / "target.test.jsonl"),
                "--pred", str(feat), "--pred-field", "mentions",
                "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert set(report) == {"precision", "recall", "f1", "tp", "fp", "fn"}
    assert report["recall"] < 1.0  # dictionary coverage bound


def test_full_pipeline_smoke(small_pipeline, tmp_path):
    bench, wiki_corpus, _ = small_pipeline
    ckpt_dir = tmp_path / "ckpts"
    assert run(["pretrain", "--corpus", str(wiki_corpus),
                "--vocab-extra", str(bench / "target.train.jsonl"),
                "--checkpoint-every", "4", "--max-steps", "8",
                "--epochs", "1", "--out", str(ckpt_dir)]) == 0
    assert (ckpt_dir / "vocab.json").exists()
    assert (ckpt_dir / "checkpoint-000000.jfmd").exists()
    assert (ckpt_dir / "run.config").exists()

    feat_args = ["--lexicon", str(bench / "lexicon.txt"),
                 "--freq", str(bench / "freqs.tsv"),
                 "--mlm-corpus", str(wiki_corpus)]
    feats = {}
    for split in ("train", "dev", "test"):
        out = tmp_path / f"t.{split}.jsonl"
        assert run(["featurize", "--corpus", str(bench / f"target.{split}.jsonl"),
                    *feat_args, "--out", str(out)]) == 0
        feats[split] = str(out)

    models = []
    for name, features in (("m1", "binary"), ("m2", "binary,tf"),
                           ("m3", "binary,mlm"), ("m4", "binary,tf,mlm")):
        model_path = tmp_path / f"{name}.jfmd"
        assert run(["finetune", "--init", str(ckpt_dir / "final.jfmd"),
                    "--corpus", feats["train"], "--dev", feats["dev"],
                    "--features", features, "--epochs", "2",
                    "--out", str(model_path)]) == 0
        models.append(str(model_path))

    pred = tmp_path / "pred.jsonl"
    assert run(["predict", "--model", models[0], "--input", feats["test"],
                "--out", str(pred)]) == 0
    ev = tmp_path / "eval.json"
    assert run(["eval", "--gold", feats["test"], "--pred", str(pred),
                "--out", str(ev)]) == 0
    assert json.loads(ev.read_text())["f1"] >= 0.0

    report = tmp_path / "report.csv"
    voted = tmp_path / "voted.jsonl"
    assert run(["ensemble", "--members", ",".join(models),
                "--valid", feats["dev"], "--test", feats["test"],
                "--out-pred", str(voted), "--out-report", str(report)]) == 0
    lines = report.read_text().strip().splitlines()
    assert len(lines) == 1 + 4 + 1  # header + members + ensemble

    sweep_csv = tmp_path / "sweep.csv"
    assert run(["sweep", "--checkpoints", str(ckpt_dir),
                "--corpus", feats["train"], "--dev", feats["dev"],
                "--test", feats["test"], "--epochs", "1",
                "--out", str(sweep_csv)]) == 0
    plot = tmp_path / "plot.json"
    assert run(["analyze", "plot-data", "--sweep", str(sweep_csv),
                "--out", str(plot)]) == 0
    payload = json.loads(plot.read_text())
    assert "spearman_rho" in payload and len(payload["points"]) >= 2

    scores_csv = tmp_path / "scores.csv"
    assert run(["analyze", "scores", "--corpus", str(bench / "target.test.jsonl"),
                "--lexicon", str(bench / "lexicon.txt"),
                "--freq", str(bench / "freqs.tsv"),
                "--mlm-corpus", str(wiki_corpus),
                "--out", str(scores_csv)]) == 0
    assert scores_csv.read_text().startswith("record,")


def test_config_precedence_and_unknown_key(tmp_path, small_pipeline):
    bench, _, _ = small_pipeline
    cfg = tmp_path / "c.config"
    cfg.write_text("epochs = 1\nlr = 0.111\n")
    out = tmp_path / "m.jfmd"
    # flag --lr beats the file value; file supplies epochs
    assert run(["train", "--corpus", str(bench / "target.train.jsonl"),
                "--config", str(cfg), "--lr", "0.222", "--out", str(out)]) == 0
    sidecar = (tmp_path / "m.jfmd.config").read_text()
    assert "lr = 0.222" in sidecar
    assert "epochs = 1" in sidecar

    bad = tmp_path / "bad.config"
    bad.write_text("no_such_key = 1\n")
    assert run(["train", "--corpus", str(bench / "target.train.jsonl"),
                "--config", str(bad), "--out", str(out)]) == 1


def test_sidecar_round_trip_reproduces_artifact(tmp_path, small_pipeline):
    bench, _, _ = small_pipeline
    out = tmp_path / "m.jfmd"
    assert run(["train", "--corpus", str(bench / "target.train.jsonl"),
                "--dev", str(bench / "target.dev.jsonl"),
                "--epochs", "2", "--seed", "3", "--out", str(out)]) == 0
    first = out.read_bytes()
    sidecar = str(out) + ".config"
    assert os.path.exists(sidecar)
    assert run(["train", "--config", sidecar]) == 0
    assert out.read_bytes() == first


def test_predict_requires_featurized_input_for_channel_models(tmp_path, small_pipeline):
    bench, wiki_corpus, _ = small_pipeline
    model_path = tmp_path / "m.jfmd"
    feat = tmp_path / "ft.jsonl"
    assert run(["featurize", "--corpus", str(bench / "target.train.jsonl"),
                "--lexicon", str(bench / "lexicon.txt"), "--out", str(feat)]) == 0
    assert run(["train", "--corpus", str(feat), "--features", "binary",
                "--epochs", "1", "--out", str(model_path)]) == 0
    code = run(["predict", "--model", str(model_path),
                "--input", str(bench / "target.test.jsonl"), "--out", "-"])
    assert code == 2


def test_ensemble_missing_model_file_fatal(tmp_path, small_pipeline):
    bench, _, _ = small_pipeline
    code = run(["ensemble", "--members", str(tmp_path / "nope.jfmd"),
                "--valid", str(bench / "target.dev.jsonl"),
                "--test", str(bench / "target.test.jsonl"),
                "--out-pred", str(tmp_path / "p.jsonl"),
                "--out-report", str(tmp_path / "r.csv")])
    assert code == 2


def test_analyze_compare(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("seed,f1\n0,0.9\n1,0.92\n2,0.91\n")
    b.write_text("seed,f1\n0,0.8\n1,0.85\n2,0.83\n")
    out = tmp_path / "cmp.json"
    assert run(["analyze", "compare", "--a", str(a), "--b", str(b), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["mean_diff"] > 0 and payload["p"] < 0.05
