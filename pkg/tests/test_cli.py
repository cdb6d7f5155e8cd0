import json
import re
from pathlib import Path

import numpy as np
import pytest

from charqa.cli import main
from charqa.dataset import build_eval_queryset
from charqa.drama import parse_play
from charqa.embedder import load_model, save_vectors

EMB = ["--dim", "16", "--hash-bits", "10"]
SCORER = ["--hidden", "16", "--epochs", "1", "--lr", "1e-3", "--window", "30"]


def run(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, argv
    return code


def tree_bytes(d: Path) -> dict[str, bytes]:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Runs the whole pipeline once; tests inspect the outputs."""
    root = tmp_path_factory.mktemp("cli")
    d = {k: root / k for k in ("plays", "corpus", "embed", "av", "novels", "ncorpus", "ctx", "aug",
                              "eval_ctx", "eval_aug", "report")}
    run("synth", "--kind", "drama", "--count", 10, "--out", d["plays"])
    run("build-corpus", "--input", d["plays"], "--out", d["corpus"])
    run("train-embed", "--corpus", d["corpus"], "--epochs", 2, "--lr", 1e-3, *EMB, "--out", d["embed"])
    run("eval-av", "--corpus", d["corpus"], "--model", d["embed"] / "model.qaemb", "--baseline", "random",
        "--split", "train", "--out", d["av"], "--hash-bits", 10)
    run("synth", "--kind", "novels", "--count", 3, "--out", d["novels"])
    run("build-corpus", "--kind", "novels", "--input", d["novels"], "--out", d["ncorpus"])
    folds = root / "folds.json"
    folds.write_text(json.dumps([["novel000"], ["novel001"], ["novel002"]]))
    d["folds"] = folds
    run("train-attrib", "--novels", d["ncorpus"], "--folds", folds, "--fold", 0, *SCORER, "--out", d["ctx"])
    run("train-attrib", "--novels", d["ncorpus"], "--folds", folds, "--fold", 0, *SCORER,
        "--arity", "augmented", "--char-source", "predicted", "--embedder", d["embed"] / "model.qaemb",
        "--out", d["aug"])
    run("eval-attrib", "--novels", d["ncorpus"], "--folds", folds, "--fold", 0, "--models", d["ctx"],
        "--min-quotes", 1, "--out", d["eval_ctx"])
    run("eval-attrib", "--novels", d["ncorpus"], "--folds", folds, "--fold", 0, "--models", d["aug"],
        "--char-source", "gold", "predicted", "--embedder", d["embed"] / "model.qaemb",
        "--min-quotes", 1, "--out", d["eval_aug"])
    run("report", "--stats", d["corpus"] / "stats.json", "--auc", f"feature={d['av'] / 'auc.json'}",
        "--metrics", f"context={d['eval_ctx'] / 'metrics-context.json'}",
        f"gold={d['eval_aug'] / 'metrics-augmented-gold.json'}",
        "--delta", d["eval_aug"] / "metrics-augmented-gold.json",
        d["eval_aug"] / "metrics-augmented-predicted.json", "--out", d["report"])
    return d


def test_outputs_present(work):
    assert {"corpus.json", "audit.jsonl", "stats.json", "stats.csv", "stats.txt", "manifest.json"} <= set(
        tree_bytes(work["corpus"]))
    assert {"model.qaemb", "loss.csv"} <= set(tree_bytes(work["embed"]))
    assert {"auc.json", "ttest.json", "auc.csv", "per_play.csv"} <= set(tree_bytes(work["av"]))
    assert {"fold0.qascr", "fold0-context.qascr", "loss.csv"} <= set(tree_bytes(work["aug"]))
    assert {"delta.csv", "metrics.csv", "predictions-augmented-gold.jsonl",
            "predictions-augmented-predicted.jsonl"} <= set(tree_bytes(work["eval_aug"]))
    assert {"table_stats.csv", "table_auc.csv", "table_accuracy.csv", "table_delta.csv"} <= set(
        tree_bytes(work["report"]))


def test_audit_has_train_epoch_and_splits(work):
    splits = {json.loads(l)["split"] for l in (work["corpus"] / "audit.jsonl").read_text().splitlines()}
    assert splits == {"train-epoch0", "train", "val", "test"}


def test_manifest_hashes_outputs(work):
    man = json.loads((work["eval_ctx"] / "manifest.json").read_text())
    assert man["command"] == "eval-attrib"
    import hashlib
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((work["eval_ctx"] / name).read_bytes()).hexdigest() == digest


def test_metrics_columns(work):
    header = (work["eval_aug"] / "metrics.csv").read_text().splitlines()[0]
    assert header == "system,overall,non-explicit,explicit,anaphoric,implicit"
    assert (work["eval_aug"] / "metrics.csv").read_text().splitlines()[-1].startswith("unanswerable (%)")


def rerun_matches(work, tmp_path, name, argv):
    out = tmp_path / name
    run(*argv, "--out", out)
    assert tree_bytes(out) == tree_bytes(work[name])


def test_deterministic_build_and_train(work, tmp_path):
    rerun_matches(work, tmp_path, "corpus", ["build-corpus", "--input", work["plays"]])
    rerun_matches(work, tmp_path, "embed", ["train-embed", "--corpus", work["corpus"], "--epochs", 2,
                                            "--lr", 1e-3, *EMB])


def test_deterministic_eval(work, tmp_path):
    rerun_matches(work, tmp_path, "eval_aug", [
        "eval-attrib", "--novels", work["ncorpus"], "--folds", work["folds"], "--fold", 0, "--models",
        work["aug"], "--char-source", "gold", "predicted", "--embedder", work["embed"] / "model.qaemb",
        "--min-quotes", 1])


def test_thread_count_does_not_change_results(work, tmp_path, monkeypatch):
    monkeypatch.setenv("QA_THREADS", "3")
    rerun_matches(work, tmp_path, "eval_ctx", [
        "eval-attrib", "--novels", work["ncorpus"], "--folds", work["folds"], "--fold", 0,
        "--models", work["ctx"], "--min-quotes", 1])


def test_bad_thread_env(work, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QA_THREADS", "many")
    assert main(["synth", "--out", str(tmp_path)]) == 1
    assert "QA_THREADS" in json.loads(capsys.readouterr().err)["errors"][0]


def test_vectors_import_matches_model(work, tmp_path):
    model = load_model(work["embed"] / "model.qaemb")
    corpus = json.loads((work["corpus"] / "corpus.json").read_text())
    vecs = {}
    for pid in corpus["splits"]["train"]:
        play = parse_play(corpus["plays"][pid], source=pid)
        for seg in play.units("scene"):
            qs = build_eval_queryset(seg, corpus["seed"])
            if qs:
                for c in (*qs.queries, *qs.targets):
                    vecs[c.key] = model.encode_collection(c)
    save_vectors(vecs, tmp_path / "v.txt")
    run("eval-av", "--corpus", work["corpus"], "--vectors", tmp_path / "v.txt", "--split", "train",
        "--out", tmp_path / "out")
    a = json.loads((tmp_path / "out" / "auc.json").read_text())
    b = json.loads((work["av"] / "auc.json").read_text())
    assert a["per_play"].keys() == b["per_play"].keys()
    for k in a["per_play"]:
        assert a["per_play"][k] == pytest.approx(b["per_play"][k], abs=1e-6)


def test_scene_ineligible_play_excluded(work, tmp_path):
    inp = tmp_path / "in"
    inp.mkdir()
    for f in work["plays"].glob("*.xml"):
        (inp / f.name).write_text(f.read_text())
    flat = re.sub(r"</?(act|scene)[^>]*>\n?", "", (work["plays"] / "synth000.xml").read_text())
    (inp / "flat.xml").write_text(flat.replace('id="synth000"', 'id="flat"'))
    run("build-corpus", "--input", inp, "--out", tmp_path / "scene")
    run("build-corpus", "--input", inp, "--mode", "play", "--out", tmp_path / "play")
    assert "flat" not in json.loads((tmp_path / "scene" / "corpus.json").read_text())["plays"]
    assert "flat" in json.loads((tmp_path / "play" / "corpus.json").read_text())["plays"]


def test_parse_error_exit_code_and_json(tmp_path, capsys):
    (tmp_path / "bad.xml").write_text('<play id="x">\n<sp who="A">unclosed\n</play>\n')
    assert main(["build-corpus", "--input", str(tmp_path), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["errors"] and "bad.xml" in err["errors"][0]


def test_unknown_fold_novel(work, tmp_path, capsys):
    folds = tmp_path / "f.txt"
    folds.write_text("novel000 nosuch\n")
    assert main(["train-attrib", "--novels", str(work["ncorpus"]), "--folds", str(folds),
                 "--out", str(tmp_path / "o")]) == 1
    assert "nosuch" in capsys.readouterr().err


def test_config_precedence(work, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 1, "lr": 0.5, "dim": 16, "hash-bits": 10}))
    run("train-embed", "--corpus", work["corpus"], "--config", cfg, "--lr", 1e-3, "--out", tmp_path / "o")
    settings = json.loads((tmp_path / "o" / "manifest.json").read_text())["settings"]
    assert settings["epochs"] == 1 and settings["lr"] == 1e-3 and settings["dim"] == 16
    assert (tmp_path / "o" / "loss.csv").read_text().count("\n") == 2


def test_config_unknown_key(work, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochz": 1}))
    assert main(["train-embed", "--corpus", str(work["corpus"]), "--config", str(cfg),
                 "--out", str(tmp_path / "o")]) == 1
    assert "epochz" in capsys.readouterr().err


def test_missing_encoder_is_error(work, tmp_path, capsys):
    assert main(["eval-av", "--corpus", str(work["corpus"]), "--out", str(tmp_path)]) == 1
    assert "--model" in capsys.readouterr().err
