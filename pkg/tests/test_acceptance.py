"""One test per primary acceptance criterion.

Each test prints (and records for the terminal summary) a single
``PASS``/``FAIL`` line with the measured values.
"""

import shutil
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from charqa.attribution import (ALTQUOTE_TOKEN, AUGMENTED, CONTEXT, QUOTE_TOKEN, ScorerConfig, ScorerModel,
                                attribute, build_context, encode_context, enumerate_candidates,
                                evaluate_attribution, train_scorer)
from charqa.attribution.pipeline import novel_vectors
from charqa.attribution.scorer import candidate_inputs, quote_loss, score_candidates
from charqa.av_eval import SCENE, auc, eval_corpus
from charqa.cli import main
from charqa.dataset import build_eval_queryset, split_corpus
from charqa.embedder import EmbeddingModel, TrainConfig, supcon_loss, train
from charqa.synth import NovelSpec, PlaySpec, generate_novels, generate_plays

from helpers import random_novel, unanswerable_fixture
from report_fixtures import GOLDEN_NAMES, render_all

GOLDEN = Path(__file__).parent / "golden"


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-6)


def central_diff(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def test_auc_oracle_equivalence():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        # integer scores so that ties are frequent
        pos = float(rng.integers(0, 6))
        negs = rng.integers(0, 6, size=n).astype(float).tolist()
        pairs = sum(1.0 if pos > x else 0.5 if pos == x else 0.0 for x in negs)
        if auc(pos, negs) != pairs / n:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    record("AUC oracle equivalence", mismatches == 0 and elapsed < 5,
           f"{mismatches} mismatches in 1000 sets, {elapsed:.2f}s (limit 5s)")


def test_gradient_checks():
    t0 = time.perf_counter()
    worst_sc = worst_scorer = b2_max = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 9))
        E = rng.standard_normal((n, int(rng.integers(2, 6))))
        labels = rng.integers(0, 3, size=n).tolist()
        labels[:2] = [labels[0], labels[0]]  # at least one positive pair
        groups = rng.integers(0, 2, size=n).tolist()
        groups[1] = groups[0]
        _, g = supcon_loss(E, labels, 0.1, groups)
        num = central_diff(lambda: supcon_loss(E, labels, 0.1, groups)[0], E)
        worst_sc = max(worst_sc, rel_err(g, num))

        arity = (CONTEXT, AUGMENTED)[seed % 2]
        cfg = ScorerConfig(arity=arity, hidden=5, emb_dim=3, vocab_buckets=8, char_dim=2, seed=seed)
        s = ScorerModel(cfg)
        k = int(rng.integers(2, 6))
        Xc = rng.standard_normal((k, cfg.context_dim))
        Xa = rng.standard_normal((k, cfg.extra_dim)) if arity == AUGMENTED else None
        # at least one positive and one negative, else the loss is identically zero
        pos = rng.random(k) < 0.4
        pos[0], pos[1] = True, False
        pos = rng.permutation(pos)
        _, grads = quote_loss(s.params, Xc, Xa, pos)
        for name, p in s.params.items():
            num = central_diff(lambda: quote_loss(s.params, Xc, Xa, pos)[0], p)
            if name == "b2":
                # shifts every score equally: the exact gradient is zero
                b2_max = max(b2_max, float(np.abs(grads[name]).max()), float(np.abs(num).max()))
            else:
                worst_scorer = max(worst_scorer, rel_err(grads[name], num))
    elapsed = time.perf_counter() - t0
    record("Gradient checks", worst_sc < 1e-4 and worst_scorer < 1e-4 and b2_max < 1e-8 and elapsed < 30,
           f"50 instances each, max rel err supcon {worst_sc:.2e}, scorer {worst_scorer:.2e} "
           f"(output bias |grad| {b2_max:.1e}, exactly zero in theory), {elapsed:.1f}s (limit 30s)")


def test_augmented_degenerates_to_context_only():
    novel = generate_novels(NovelSpec(n_novels=1), 0)[0]
    ctx = ScorerModel(ScorerConfig(seed=3))
    params = {k: v.copy() for k, v in ctx.params.items()}
    aug_cfg = ScorerConfig(arity=AUGMENTED, seed=3)
    params["W1x"] = np.zeros((aug_cfg.hidden, aug_cfg.extra_dim))
    aug = ScorerModel(aug_cfg, params=params, embeddings=ctx.embeddings)
    zeros = {c.id: np.zeros(aug_cfg.char_dim) for c in novel.characters}
    checked = differ = 0
    for q in novel.quotes:
        seg = build_context(novel, q)
        cands = enumerate_candidates(seg, novel)
        H = encode_context(ctx, seg)
        a = score_candidates(ctx, *candidate_inputs(ctx, H, seg.quote_pos, cands))
        b = score_candidates(aug, *candidate_inputs(aug, H, seg.quote_pos, cands, zeros,
                                                    np.zeros(aug_cfg.char_dim)))
        checked += len(a)
        differ += int(np.count_nonzero(a != b))
    record("Augmented scorer degeneracy", differ == 0 and checked > 0,
           f"{checked} candidate scores over {len(novel.quotes)} quotes, {differ} differ (exact)")


def test_masking_and_candidate_soundness():
    violations = []
    quotes = 0
    for seed in range(500):
        novel = random_novel(seed)
        known = {c.id for c in novel.characters}
        w = seed % 31
        for q in novel.quotes:
            quotes += 1
            seg = build_context(novel, q, w)
            if seg.tokens.count(QUOTE_TOKEN) != 1:
                violations.append((seed, q.id, "focal"))
            for pos, (a, b) in enumerate(seg.doc_spans):
                if any(o.start <= b and a <= o.end for o in novel.quotes) and \
                        seg.tokens[pos] not in (QUOTE_TOKEN, ALTQUOTE_TOKEN):
                    violations.append((seed, q.id, "unmasked"))
            for c in enumerate_candidates(seg, novel):
                if c.entity_id not in known or c.mention.quote_internal or \
                        not (seg.lo <= c.mention.start and c.mention.end <= seg.hi):
                    violations.append((seed, q.id, "candidate"))
    record("Masking completeness and candidate soundness", not violations,
           f"500 novels, {quotes} quotes, {len(violations)} violations")


@pytest.mark.slow
def test_synthetic_av_end_to_end():
    t0 = time.perf_counter()
    plays = generate_plays(PlaySpec(n_plays=40, n_characters=6), seed=0)
    splits = split_corpus(plays, rng_seed=0)
    by_play = {p.id: [q for q in (build_eval_queryset(u, 0) for u in p.units(SCENE)) if q]
               for p in splits["test"]}

    def mean_segment_auc(model):
        r = eval_corpus(model, by_play, SCENE)
        return float(np.mean(list(r.per_segment.values())))

    untrained = EmbeddingModel(seed=0)
    random_auc = mean_segment_auc(untrained)
    segs = [u for p in splits["train"] for u in p.units(SCENE)]
    trained = train(untrained, segs, TrainConfig()).model
    trained_auc = mean_segment_auc(trained)
    elapsed = time.perf_counter() - t0
    ok = trained_auc >= 0.90 and abs(random_auc - 0.5) <= 0.05 and elapsed < 300
    record("Synthetic AV end-to-end", ok,
           f"trained {trained_auc:.3f} (>= 0.90), random {random_auc:.3f} (0.50 +- 0.05), "
           f"{len(splits['test'])} held-out plays, {elapsed:.0f}s (limit 300s)")


@pytest.fixture(scope="module")
def attribution_run():
    """Embedder on synthetic plays, then both scorers on synthetic novels."""
    t0 = time.perf_counter()
    plays = generate_plays(PlaySpec(n_plays=16), seed=0)
    emb = train(EmbeddingModel(seed=0), [u for p in plays for u in p.units(SCENE)], TrainConfig()).model
    novels = generate_novels(NovelSpec(), seed=0)
    train_set, test_set = novels[:8], novels[8:]
    gold = {n.id: novel_vectors(n, emb) for n in novels}
    ctx, _ = train_scorer(train_set, ScorerConfig(arity=CONTEXT))
    aug, _ = train_scorer(train_set, ScorerConfig(arity=AUGMENTED), gold)
    ctx_res = [r for n in test_set for r in attribute(ctx, n)]
    aug_res = [r for n in test_set for r in attribute(aug, n, gold[n.id])]
    elapsed = time.perf_counter() - t0
    return dict(emb=emb, ctx=ctx, aug=aug, test=test_set, elapsed=elapsed,
                ctx_table=evaluate_attribution(ctx_res), aug_table=evaluate_attribution(aug_res))


@pytest.mark.slow
def test_synthetic_attribution_end_to_end(attribution_run):
    c, a = attribution_run["ctx_table"].accuracy, attribution_run["aug_table"].accuracy
    gap = a["implicit"] - c["implicit"]
    t = attribution_run["elapsed"]
    ok = c["explicit"] == 100.0 and gap >= 10 and t < 600
    record("Synthetic attribution end-to-end", ok,
           f"context-only explicit {c['explicit']:.1f}% (= 100), implicit context-only {c['implicit']:.1f}% "
           f"vs augmented {a['implicit']:.1f}% (gap {gap:.1f} >= 10), {t:.0f}s (limit 600s)")


@pytest.mark.slow
def test_predicted_source_bootstrap(attribution_run):
    run = attribution_run
    explicit = run["ctx_table"].accuracy["explicit"]
    pred = {n.id: novel_vectors(n, run["emb"], "predicted", run["ctx"]) for n in run["test"]}
    pred_table = evaluate_attribution([r for n in run["test"] for r in attribute(run["aug"], n, pred[n.id])])
    gold_table = run["aug_table"]
    deltas = {k: abs(pred_table.accuracy[k] - gold_table.accuracy[k])
              for k in gold_table.accuracy if gold_table.accuracy[k] is not None}
    worst = max(deltas.values())
    record("Gold vs predicted character embeddings", explicit >= 99 and worst <= 1.0,
           f"context-only explicit {explicit:.1f}% (>= 99), max accuracy difference {worst:.2f} points "
           f"(<= 1) over {', '.join(deltas)}")


def test_unanswerable_semantics():
    novel = unanswerable_fixture()
    k, n = 2, len(novel.quotes)
    rng = np.random.default_rng(0)
    worst_acc = 0.0
    ok = True
    for seed in range(20):
        s = ScorerModel(ScorerConfig(hidden=16, emb_dim=8, vocab_buckets=64, seed=seed))
        s.params["w2"][:] = rng.standard_normal(16)
        t = evaluate_attribution(attribute(s, novel, window=10), min_quotes=1)
        ok &= t.unanswerable["overall"] == 100.0 * k / n
        ok &= t.accuracy["overall"] <= 100.0 * (1 - k / n)
        worst_acc = max(worst_acc, t.accuracy["overall"])
    record("Unanswerable semantics", ok,
           f"k={k}, N={n}: unanswerable {t.unanswerable['overall']:.1f}% (= {100 * k / n:.1f}), "
           f"max accuracy over 20 scorers {worst_acc:.1f}% (<= {100 * (1 - k / n):.1f})")


def tree_bytes(d: Path) -> dict[str, bytes]:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_cli_determinism(tmp_path):
    def pipeline(root: Path):
        p = lambda *a: [str(x) for x in a]
        small = ["--hidden", "16", "--epochs", "1", "--lr", "1e-3", "--window", "30"]
        steps = [
            ("synth", p("synth", "--count", 10, "--out", root / "plays")),
            ("synth-novels", p("synth", "--kind", "novels", "--count", 3, "--out", root / "novels")),
            ("build-corpus", p("build-corpus", "--input", root / "plays", "--out", root / "corpus")),
            ("build-corpus-novels", p("build-corpus", "--kind", "novels", "--input", root / "novels",
                                      "--out", root / "ncorpus")),
            ("train-embed", p("train-embed", "--corpus", root / "corpus", "--epochs", 2, "--dim", 16,
                              "--hash-bits", 10, "--lr", 1e-3, "--out", root / "embed")),
            ("eval-av", p("eval-av", "--corpus", root / "corpus", "--model", root / "embed" / "model.qaemb",
                          "--baseline", "random", "--split", "train", "--hash-bits", 10, "--out", root / "av")),
            ("train-attrib", p("train-attrib", "--novels", root / "ncorpus", "--folds", root / "folds.txt",
                               "--fold", 0, *small, "--arity", "augmented", "--char-source", "predicted",
                               "--embedder", root / "embed" / "model.qaemb", "--out", root / "attrib")),
            ("eval-attrib", p("eval-attrib", "--novels", root / "ncorpus", "--folds", root / "folds.txt",
                              "--fold", 0, "--models", root / "attrib", "--char-source", "gold", "predicted",
                              "--embedder", root / "embed" / "model.qaemb", "--min-quotes", 1,
                              "--out", root / "eval")),
            ("report", p("report", "--stats", root / "corpus" / "stats.json",
                         "--auc", root / "av" / "auc.json",
                         "--metrics", root / "eval" / "metrics-augmented-gold.json",
                         "--delta", root / "eval" / "metrics-augmented-gold.json",
                         root / "eval" / "metrics-augmented-predicted.json", "--out", root / "report")),
        ]
        root.mkdir()
        (root / "folds.txt").write_text("novel000\nnovel001\nnovel002\n")
        outs = {}
        for name, argv in steps:
            assert main(argv) == 0, name
            outs[name] = tree_bytes(Path(argv[argv.index("--out") + 1]))
        return outs

    # identical argv both times: the manifests record input paths
    root = tmp_path / "run"
    a = pipeline(root)
    shutil.rmtree(root)
    b = pipeline(root)
    differing = [k for k in a if a[k] != b[k]]
    files = sum(len(v) for v in a.values())
    record("CLI determinism", not differing,
           f"{len(a)} command runs, {files} output files, byte-identical: "
           f"{'all' if not differing else 'not ' + ', '.join(differing)}")


def test_report_fidelity():
    rendered = render_all()
    mismatched = [n for n in GOLDEN_NAMES if rendered[n] != (GOLDEN / n).read_text()]
    stats_header = rendered["stats.csv"].splitlines()[0].split(",")
    acc_lines = rendered["accuracy.csv"].splitlines()
    ok = (not mismatched and stats_header[1:] == ["segments", "utterances", "queries", "targets/query"]
          and acc_lines[0].split(",")[1:] == ["overall", "non-explicit", "explicit", "anaphoric", "implicit"]
          and acc_lines[-1].startswith("unanswerable (%)"))
    record("Report fidelity", ok,
           f"{len(GOLDEN_NAMES) - len(mismatched)}/{len(GOLDEN_NAMES)} golden files match")
