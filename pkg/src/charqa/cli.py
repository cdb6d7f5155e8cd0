"""Command-line entry point: ``charqa <command> [flags]``.

Every command writes into ``--out`` and finishes with ``manifest.json``
(effective settings plus input and output digests). Outputs depend only on
the input files, the flags and ``--seed``. On failure the command exits 1 and
prints a JSON error listing on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .attribution import (AUGMENTED, CONTEXT, AccuracyTable, ScorerConfig, attribute, evaluate_attribution,
                          load_scorer, novel_vectors, save_scorer, train_scorer)
from .av_eval import CC, CQ, PLAY, SCENE, AUCReport, eval_corpus, eval_novels, paired_ttest
from .dataset import (audit_records, build_eval_queryset, build_train_instances, instances_as_querysets,
                      split_corpus, write_audit)
from .drama import DramaParseError, parse_play
from .embedder import (EmbeddingModel, TrainConfig, VectorTable, load_model, load_vectors, save_model, train)
from .features import FeatureConfig
from .novel import QUOTE_TYPES, NovelValidationError, build_novel, novel_to_annotation, parse_novel
from .reports import Table, accuracy_table, auc_table, delta_table, per_play_table, stats_table
from .stats import CorpusStats, SplitStats, corpus_stats
from .synth import NovelSpec, PlaySpec, generate_novels, generate_play_markup

log = logging.getLogger("charqa")

SPLITS = ("train", "val", "test")
GOLD, PREDICTED, VECTORS_FILE = "gold", "predicted", "vectors-file"


class CommandError(Exception):
    """Failure with one or more human-readable messages."""

    def __init__(self, *messages: str):
        super().__init__("; ".join(messages))
        self.messages = list(messages)


# ----------------------------------------------------------------------------
# small file helpers

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def _write_table(out: Path, stem: str, table: Table) -> None:
    (out / f"{stem}.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / f"{stem}.txt").write_text(table.to_text(), encoding="utf-8")


def _inputs_digest(paths) -> dict[str, str]:
    """Digest of every input file, keyed by its path relative to the input root."""
    out = {}
    for root in paths:
        if root is None:
            continue
        root = Path(root)
        files = sorted(p for p in root.rglob("*") if p.is_file()) if root.is_dir() else [root]
        for f in files:
            rel = f.relative_to(root).as_posix() if root.is_dir() else f.name
            key = f"{root.name}/{rel}" if root.is_dir() else rel
            if key != f"{root.name}/manifest.json":
                out[key] = _sha256(f)
    return out


def _write_manifest(args, out: Path, inputs) -> None:
    settings = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "out", "config", "verbose", "threads") and not callable(v)}
    outputs = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}
    _write_json(out / "manifest.json", {
        "command": args.command, "version": __version__, "settings": settings,
        "inputs": _inputs_digest(inputs), "outputs": outputs,
    })


# ----------------------------------------------------------------------------
# corpus loading

def _load_drama_corpus(path) -> dict:
    path = Path(path)
    f = path / "corpus.json"
    if not f.exists():
        raise CommandError(f"{path}: no corpus.json (run build-corpus first)")
    data = json.loads(f.read_text(encoding="utf-8"))
    if data.get("kind") != "drama":
        raise CommandError(f"{f}: not a drama corpus")
    plays = {pid: parse_play(m, source=pid) for pid, m in data["plays"].items()}
    return {"mode": data["mode"], "seed": data["seed"], "plays": plays,
            "splits": {s: [plays[i] for i in ids] for s, ids in data["splits"].items()}}


def _read_novel_dir(path: Path):
    novels, errors = [], []
    for ann in sorted(path.glob("*.json")):
        if ann.name in ("manifest.json", "corpus.json"):
            continue
        txt = ann.with_suffix(".txt")
        if not txt.exists():
            errors.append(f"{ann.name}: missing text file {txt.name}")
            continue
        try:
            novels.append(parse_novel(txt, ann))
        except (NovelValidationError, ValueError) as e:
            errors.append(f"{ann.name}: {e}")
    return novels, errors


def _load_novels(path) -> list:
    path = Path(path)
    corpus = path / "corpus.json"
    if corpus.exists():
        data = json.loads(corpus.read_text(encoding="utf-8"))
        if data.get("kind") != "novels":
            raise CommandError(f"{corpus}: not a novel corpus")
        novels = [build_novel(nid, rec["text"], rec["annotation"]) for nid, rec in sorted(data["novels"].items())]
    else:
        novels, errors = _read_novel_dir(path)
        if errors:
            raise CommandError(*errors)
    if not novels:
        raise CommandError(f"{path}: no annotated novels found")
    return sorted(novels, key=lambda n: n.id)


def _read_folds(path, known) -> list[list[str]]:
    """Folds as lists of held-out novel ids: a JSON list of lists (or an
    object with a ``folds`` key), else one whitespace-separated line per fold."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
        folds = data["folds"] if isinstance(data, dict) else data
    except json.JSONDecodeError:
        folds = [line.split() for line in raw.splitlines() if line.strip() and not line.startswith("#")]
    folds = [[str(x) for x in f] for f in folds]
    errors = [f"fold {k}: unknown novel {nid!r}" for k, f in enumerate(folds) for nid in f if nid not in known]
    if errors:
        raise CommandError(*errors)
    if not folds:
        raise CommandError(f"{path}: no folds")
    return folds


def _fold_indices(args, folds) -> list[int]:
    if args.fold is None:
        return list(range(len(folds)))
    if not 0 <= args.fold < len(folds):
        raise CommandError(f"--fold {args.fold} out of range (file has {len(folds)} folds)")
    return [args.fold]


# ----------------------------------------------------------------------------
# commands

def cmd_synth(args) -> None:
    """Write a synthetic drama or novel input directory."""
    out = Path(args.out)
    if args.kind == "drama":
        spec = PlaySpec(n_plays=args.count) if args.count else PlaySpec()
        for pid, markup in generate_play_markup(spec, args.seed).items():
            (out / f"{pid}.xml").write_text(markup, encoding="utf-8")
    else:
        spec = NovelSpec(n_novels=args.count) if args.count else NovelSpec()
        for novel in generate_novels(spec, args.seed):
            (out / f"{novel.id}.txt").write_text(novel.text, encoding="utf-8")
            _write_json(out / f"{novel.id}.json", novel_to_annotation(novel))
    _write_manifest(args, out, [])


def cmd_build_corpus(args) -> None:
    inp, out = Path(args.input), Path(args.out)
    if args.kind == "novels":
        novels, errors = _read_novel_dir(inp)
        if errors:
            raise CommandError(*errors)
        if not novels:
            raise CommandError(f"{inp}: no annotated novels found")
        _write_json(out / "corpus.json", {"kind": "novels", "novels": {
            n.id: {"text": n.text, "annotation": novel_to_annotation(n)} for n in novels}})
        t = Table(("novel", "characters", "quotes", *QUOTE_TYPES))
        for n in novels:
            t.add(n.id, len(n.characters), len(n.quotes),
                  *(sum(q.quote_type == k for q in n.quotes) for k in QUOTE_TYPES))
        _write_table(out, "stats", t)
        _write_manifest(args, out, [inp])
        return

    markup, plays, errors = {}, [], []
    for f in sorted(inp.glob("*.xml")):
        text = f.read_text(encoding="utf-8")
        try:
            play = parse_play(text, source=f.name)
        except DramaParseError as e:
            errors.append(str(e))
            continue
        if play.id in markup:
            errors.append(f"{f.name}: duplicate play id {play.id!r}")
            continue
        if args.mode == SCENE and not play.scene_eligible:
            log.warning("%s: no scene or act tags, excluded in scene mode", f.name)
            continue
        markup[play.id] = text
        plays.append(play)
    if errors:
        raise CommandError(*errors)
    try:
        splits = split_corpus(plays, rng_seed=args.seed)
    except ValueError as e:
        raise CommandError(str(e)) from None
    _write_json(out / "corpus.json", {
        "kind": "drama", "mode": args.mode, "seed": args.seed, "plays": markup,
        "splits": {s: [p.id for p in splits[s]] for s in SPLITS},
    })
    qsets, records = {}, []
    for s in SPLITS:
        segs = [u for p in splits[s] for u in p.units(args.mode)]
        qsets[s] = [q for q in (build_eval_queryset(u, args.seed) for u in segs) if q is not None]
        if s == "train":
            inst = [i for u in segs for i in build_train_instances(u, args.seed, 0)]
            records += audit_records("train-epoch0", instances_as_querysets(inst))
        records += audit_records(s, qsets[s])
    write_audit(out / "audit.jsonl", records)
    stats = corpus_stats(splits, qsets, args.mode)
    _write_json(out / "stats.json", asdict(stats))
    _write_table(out, "stats", stats_table(stats))
    _write_manifest(args, out, [inp])


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(n_features=2 ** args.hash_bits)


def cmd_train_embed(args) -> None:
    corpus = _load_drama_corpus(args.corpus)
    mode = args.split_mode or corpus["mode"]
    segs = [u for p in corpus["splits"]["train"] for u in p.units(mode)]
    model = EmbeddingModel(_feature_config(args), dim=args.dim, seed=args.seed)
    cfg = TrainConfig(split_mode=mode, lr=args.lr, epochs=args.epochs, optimizer=args.optimizer,
                      temperature=args.temperature, seed=args.seed)
    try:
        result = train(model, segs, cfg)
    except ValueError as e:
        raise CommandError(f"training failed: {e}") from None
    out = Path(args.out)
    save_model(result.model, out / "model.qaemb")
    t = Table(("epoch", "loss"))
    for k, loss in enumerate(result.loss_history):
        t.add(k, f"{loss:.6f}")
    (out / "loss.csv").write_text(t.to_csv(), encoding="utf-8")
    _write_manifest(args, out, [args.corpus])


def _load_encoder(args):
    if args.vectors:
        return VectorTable(load_vectors(args.vectors))
    if args.model == "random":
        return EmbeddingModel(_feature_config(args), dim=args.dim, seed=args.seed)
    if args.model:
        return load_model(args.model)
    raise CommandError("one of --model or --vectors is required")


def _report_json(r: AUCReport) -> dict:
    return asdict(r)


def cmd_eval_av(args) -> None:
    encoder = _load_encoder(args)
    protocol = {"scene": SCENE, "play": PLAY, "cc": CC, "cq": CQ}[args.protocol]
    out = Path(args.out)
    titles, authors = {}, {}

    def run(enc):
        if protocol in (CC, CQ):
            if not args.novels:
                raise CommandError(f"protocol {args.protocol} needs --novels")
            try:
                return eval_novels(_load_novels(args.novels), enc, protocol)
            except ValueError as e:
                raise CommandError(str(e)) from None
        corpus = _load_drama_corpus(args.corpus)
        by_play = {}
        for p in corpus["splits"][args.split]:
            titles[p.id], authors[p.id] = p.title, p.author
            qs = [q for q in (build_eval_queryset(u, corpus["seed"]) for u in p.units(protocol)) if q]
            if qs:
                by_play[p.id] = qs
        if not by_play:
            raise CommandError(f"split {args.split!r} has no evaluable segment in {protocol} mode")
        return eval_corpus(enc, by_play, protocol)

    report = run(encoder)
    _write_json(out / "auc.json", _report_json(report))
    _write_table(out, "per_play", per_play_table(report, authors, titles))
    rows = {args.name: {protocol: report}}
    if args.baseline:
        base = run(load_model(args.baseline) if args.baseline != "random"
                   else EmbeddingModel(_feature_config(args), dim=encoder.dim, seed=args.seed))
        rows = {"baseline": {protocol: base}, **rows}
        common = sorted(set(base.per_play) & set(report.per_play))
        if len(common) >= 2:
            tt = paired_ttest([(base.per_play[k], report.per_play[k]) for k in common])
            _write_json(out / "ttest.json", asdict(tt))
        else:
            log.warning("paired t-test skipped: %d play(s) in common", len(common))
    _write_table(out, "auc", auc_table(rows))
    inputs = [args.corpus if protocol in (SCENE, PLAY) else args.novels, args.model if args.model != "random" else None,
              args.vectors, args.baseline if args.baseline not in (None, "random") else None]
    _write_manifest(args, out, inputs)


def _scorer_config(args, arity: str, char_dim: int) -> ScorerConfig:
    return ScorerConfig(arity=arity, window=args.window, hidden=args.hidden, mention_mode=args.mention_mode,
                        char_dim=char_dim, lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                        seed=args.seed)


def _attrib_embedder(args, source: str):
    if source == VECTORS_FILE:
        if not args.vectors:
            raise CommandError("--char-source vectors-file needs --vectors")
        return VectorTable(load_vectors(args.vectors))
    if not args.embedder:
        raise CommandError(f"--char-source {source} needs --embedder")
    return load_model(args.embedder)


def _vectors_for(novels, embedder, source, context_scorer=None, window=None) -> dict:
    src = PREDICTED if source == PREDICTED else "gold"
    return {n.id: novel_vectors(n, embedder, src, context_scorer, window) for n in novels}


def cmd_train_attrib(args) -> None:
    novels = _load_novels(args.novels)
    by_id = {n.id: n for n in novels}
    folds = _read_folds(args.folds, by_id)
    out = Path(args.out)
    losses = Table(("fold", "model", "epoch", "loss"))
    embedder = _attrib_embedder(args, args.char_source) if args.arity == AUGMENTED else None
    for k in _fold_indices(args, folds):
        train_set = [n for n in novels if n.id not in set(folds[k])]
        if not train_set:
            raise CommandError(f"fold {k}: no training novels")
        try:
            if args.arity == CONTEXT:
                scorer, hist = train_scorer(train_set, _scorer_config(args, CONTEXT, args.char_dim))
                tag = "context"
            else:
                ctx = None
                if args.char_source == PREDICTED:
                    ctx, h0 = train_scorer(train_set, _scorer_config(args, CONTEXT, embedder.dim))
                    save_scorer(ctx, out / f"fold{k}-context.qascr")
                    for e, loss in enumerate(h0):
                        losses.add(k, "context", e, f"{loss:.6f}")
                vecs = _vectors_for(train_set, embedder, args.char_source, ctx)
                scorer, hist = train_scorer(train_set, _scorer_config(args, AUGMENTED, embedder.dim), vecs)
                tag = "augmented"
        except ValueError as e:
            raise CommandError(f"fold {k}: {e}") from None
        save_scorer(scorer, out / f"fold{k}.qascr")
        for e, loss in enumerate(hist):
            losses.add(k, tag, e, f"{loss:.6f}")
    (out / "loss.csv").write_text(losses.to_csv(), encoding="utf-8")
    _write_manifest(args, out, [args.novels, args.folds, args.embedder, args.vectors])


def _accuracy_json(t: AccuracyTable) -> dict:
    return asdict(t)


def _accuracy_from_json(d: dict) -> AccuracyTable:
    return AccuracyTable(**{f.name: d[f.name] for f in fields(AccuracyTable)})


def cmd_eval_attrib(args) -> None:
    novels = _load_novels(args.novels)
    by_id = {n.id: n for n in novels}
    folds = _read_folds(args.folds, by_id)
    models = Path(args.models)
    out = Path(args.out)
    results: dict[str, list] = {}
    embedders = {}
    for k in _fold_indices(args, folds):
        path = models / f"fold{k}.qascr"
        if not path.exists():
            raise CommandError(f"fold {k}: missing model {path}")
        scorer = load_scorer(path)
        test = [by_id[i] for i in folds[k]]
        if scorer.arity == CONTEXT:
            systems = {"context": None}
        else:
            systems = {}
            for source in args.char_source:
                if source not in embedders:
                    embedders[source] = _attrib_embedder(args, source)
                ctx = None
                if source == PREDICTED:
                    cpath = (Path(args.context_models) if args.context_models else models) / (
                        f"fold{k}.qascr" if args.context_models else f"fold{k}-context.qascr")
                    if not cpath.exists():
                        raise CommandError(f"fold {k}: predicted source needs context-only scorer {cpath}")
                    ctx = load_scorer(cpath)
                systems[f"augmented-{source}"] = _vectors_for(test, embedders[source], source, ctx)
        for name, vecs in systems.items():
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                per_novel = pool.map(lambda n: attribute(scorer, n, vecs[n.id] if vecs else None), test)
                results.setdefault(name, []).extend(r for rs in per_novel for r in rs)
    tables = {}
    for name, res in results.items():
        with open(out / f"predictions-{name}.jsonl", "w", encoding="utf-8") as fh:
            for r in res:
                fh.write(json.dumps({"novel_id": r.novel_id, "quote_id": r.quote_id, "predicted": r.predicted,
                                     "gold": r.gold, "type": r.quote_type, "unanswerable": r.unanswerable},
                                    sort_keys=True) + "\n")
        tables[name] = evaluate_attribution(res, args.min_quotes, args.max_unanswerable)
        _write_json(out / f"metrics-{name}.json", _accuracy_json(tables[name]))
    _write_table(out, "metrics", accuracy_table(tables))
    if "augmented-gold" in tables and "augmented-predicted" in tables:
        _write_table(out, "delta", delta_table(tables["augmented-gold"], tables["augmented-predicted"]))
    _write_manifest(args, out, [args.novels, args.folds, args.models, args.context_models,
                                args.embedder, args.vectors])


def _named(specs) -> dict[str, Path]:
    out = {}
    for s in specs or []:
        name, sep, path = s.partition("=")
        if not sep:
            name, path = Path(s).stem, s
        out[name] = Path(path)
    return out


def cmd_report(args) -> None:
    out = Path(args.out)
    inputs = []
    if args.stats:
        d = json.loads(Path(args.stats).read_text(encoding="utf-8"))
        stats = CorpusStats(d["mode"], tuple(SplitStats(**r) for r in d["rows"]))
        _write_table(out, "table_stats", stats_table(stats))
        inputs.append(args.stats)
    if args.auc:
        rows: dict[str, dict] = {}
        for name, path in _named(args.auc).items():
            r = AUCReport(**json.loads(path.read_text(encoding="utf-8")))
            rows.setdefault(name, {})[r.protocol] = r
            inputs.append(path)
        _write_table(out, "table_auc", auc_table(rows))
    if args.metrics:
        tables = {}
        for name, path in _named(args.metrics).items():
            tables[name] = _accuracy_from_json(json.loads(path.read_text(encoding="utf-8")))
            inputs.append(path)
        _write_table(out, "table_accuracy", accuracy_table(tables))
    if args.delta:
        base, other = (_accuracy_from_json(json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.delta)
        _write_table(out, "table_delta", delta_table(base, other, Path(args.delta[0]).stem,
                                                     Path(args.delta[1]).stem))
        inputs += args.delta
    if not inputs:
        raise CommandError("nothing to report: pass --stats, --auc, --metrics or --delta")
    _write_manifest(args, out, inputs)


# ----------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="charqa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        sp.add_argument("--out", required=True, help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="JSON file of flag defaults (flags still win)")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    sp = command("synth", cmd_synth, "write a synthetic drama or novel input directory")
    sp.add_argument("--kind", choices=("drama", "novels"), default="drama")
    sp.add_argument("--count", type=int, default=None)

    sp = command("build-corpus", cmd_build_corpus, "parse inputs, split, write audit and stats")
    sp.add_argument("--input", required=True)
    sp.add_argument("--kind", choices=("drama", "novels"), default="drama")
    sp.add_argument("--mode", choices=(SCENE, PLAY), default=SCENE)

    def embed_flags(sp):
        sp.add_argument("--dim", type=int, default=512)
        sp.add_argument("--hash-bits", type=int, default=14)

    sp = command("train-embed", cmd_train_embed, "train the character embedder")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--split-mode", choices=(SCENE, PLAY), default=None)
    sp.add_argument("--lr", type=float, default=2e-5)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    sp.add_argument("--temperature", type=float, default=0.1)
    embed_flags(sp)

    sp = command("eval-av", cmd_eval_av, "authorship-verification AUC")
    sp.add_argument("--corpus")
    sp.add_argument("--novels")
    sp.add_argument("--model", help="embedder model file, or 'random' for an untrained projection")
    sp.add_argument("--vectors", help="precomputed vectors keyed by collection key")
    sp.add_argument("--baseline", help="second model (or 'random') for a paired t-test over plays")
    sp.add_argument("--protocol", choices=("scene", "play", "cc", "cq"), default="scene")
    sp.add_argument("--split", choices=SPLITS, default="test")
    sp.add_argument("--name", default="model")
    embed_flags(sp)

    def attrib_flags(sp):
        sp.add_argument("--novels", required=True)
        sp.add_argument("--folds", required=True)
        sp.add_argument("--fold", type=int, default=None)
        sp.add_argument("--embedder")
        sp.add_argument("--vectors")

    sp = command("train-attrib", cmd_train_attrib, "train quote-attribution scorers per fold")
    attrib_flags(sp)
    sp.add_argument("--arity", choices=(CONTEXT, AUGMENTED), default=CONTEXT)
    sp.add_argument("--char-source", choices=(GOLD, PREDICTED, VECTORS_FILE), default=GOLD)
    sp.add_argument("--window", type=int, default=100)
    sp.add_argument("--hidden", type=int, default=512)
    sp.add_argument("--mention-mode", choices=("first-last", "mean"), default="first-last")
    sp.add_argument("--char-dim", type=int, default=512)
    sp.add_argument("--lr", type=float, default=5e-6)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--batch-size", type=int, default=1)

    sp = command("eval-attrib", cmd_eval_attrib, "attribute held-out quotes and score them")
    attrib_flags(sp)
    sp.add_argument("--models", required=True, help="train-attrib output directory")
    sp.add_argument("--context-models", help="context-only train-attrib output for --char-source predicted")
    sp.add_argument("--char-source", nargs="+", choices=(GOLD, PREDICTED, VECTORS_FILE), default=[GOLD])
    sp.add_argument("--min-quotes", type=int, default=10)
    sp.add_argument("--max-unanswerable", type=float, default=None)

    sp = command("report", cmd_report, "render stored results as CSV and text tables")
    sp.add_argument("--stats", help="stats.json from build-corpus")
    sp.add_argument("--auc", nargs="+", help="[NAME=]auc.json from eval-av")
    sp.add_argument("--metrics", nargs="+", help="[NAME=]metrics-*.json from eval-attrib")
    sp.add_argument("--delta", nargs=2, metavar=("BASE", "OTHER"), help="two metrics-*.json files")
    return p


def parse_args(argv=None) -> argparse.Namespace:
    """Flags > ``--config`` file > built-in defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(k.replace("-", "_") for k in cfg if k.replace("-", "_") not in known)
        if unknown:
            raise CommandError(*(f"{args.config}: unknown setting {k!r}" for k in unknown))
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def _threads() -> int:
    raw = os.environ.get("QA_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise CommandError(f"QA_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise CommandError("QA_THREADS must be at least 1")
    return n


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.threads = _threads()
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with threadpool_limits(args.threads):
            args.func(args)
    except CommandError as e:
        json.dump({"errors": e.messages}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except (OSError, ValueError, KeyError) as e:
        json.dump({"errors": [f"{type(e).__name__}: {e}"]}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
