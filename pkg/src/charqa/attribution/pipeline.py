"""Training, inference and evaluation of quote attribution over novels."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..dataset import derive_rng
from ..embedder import VectorTable
from ..novel import ANAPHORIC, EXPLICIT, IMPLICIT, AnnotatedNovel, Quote
from .context import CandidateMention, build_context, enumerate_candidates, is_unanswerable
from .scorer import (AUGMENTED, Adam, ScorerConfig, ScorerModel, candidate_inputs, encode_context,
                     quote_loss, score_candidates)

log = logging.getLogger(__name__)

ABSTAIN = "ABSTAIN"
GOLD, PREDICTED = "gold", "predicted"
_QUOTE_MARKS = "\"'“”‘’«» "


def quote_text(novel: AnnotatedNovel, quote: Quote) -> str:
    """Quote surface with its enclosing quotation marks removed."""
    return novel.quote_text(quote).strip(_QUOTE_MARKS)


@dataclass
class NovelVectors:
    """Character vectors ``v_c`` and per-quote vectors ``u_q`` of one novel."""
    characters: dict[str, np.ndarray]
    quotes: dict[str, np.ndarray]


def quote_vectors(novel: AnnotatedNovel, embedder) -> dict[str, np.ndarray]:
    if isinstance(embedder, VectorTable):
        return {q.id: embedder.lookup(f"{novel.id}|q:{q.id}") for q in novel.quotes}
    return {q.id: embedder.encode_texts([quote_text(novel, q)]) for q in novel.quotes}


def build_character_embeddings(novel: AnnotatedNovel, embedder, source: str = GOLD,
                               scorer: ScorerModel | None = None,
                               window: int | None = None) -> dict[str, np.ndarray]:
    """Encode each character's explicit quotes as one collection.

    ``source="predicted"`` replaces the gold speakers of explicit quotes with
    the attributions of a context-only ``scorer``. Characters with no
    explicit quote get the zero vector.
    """
    if isinstance(embedder, VectorTable):
        return {c.id: embedder.lookup(f"{novel.id}|{c.id}") for c in novel.characters}
    explicit = [q for q in novel.quotes if q.quote_type == EXPLICIT]
    if source == GOLD:
        speakers = {q.id: q.speaker_id for q in explicit}
    elif source == PREDICTED:
        if scorer is None or scorer.arity == AUGMENTED:
            raise ValueError("predicted character embeddings need a context-only scorer")
        preds = attribute(scorer, novel, quotes=explicit, window=window)
        speakers = {r.quote_id: r.predicted for r in preds}
    else:
        raise ValueError(f"unknown character embedding source {source!r}")
    texts: dict[str, list[str]] = {}
    for q in explicit:
        who = speakers.get(q.id)
        if who is not None and who != ABSTAIN:
            texts.setdefault(who, []).append(quote_text(novel, q))
    out = {}
    for c in novel.characters:
        out[c.id] = embedder.encode_texts(texts[c.id]) if c.id in texts else np.zeros(embedder.dim)
    return out


def novel_vectors(novel, embedder, source: str = GOLD, scorer=None, window=None) -> NovelVectors:
    return NovelVectors(build_character_embeddings(novel, embedder, source, scorer, window),
                        quote_vectors(novel, embedder))


@dataclass
class QuoteInputs:
    novel_id: str
    quote: Quote
    candidates: list[CandidateMention]
    Xc: np.ndarray
    Xa: np.ndarray | None

    @property
    def positive(self) -> np.ndarray:
        return np.array([c.entity_id == self.quote.speaker_id for c in self.candidates], dtype=bool)


def prepare_quote(scorer: ScorerModel, novel: AnnotatedNovel, quote: Quote,
                  vectors: NovelVectors | None = None, window: int | None = None) -> QuoteInputs:
    seg = build_context(novel, quote, window or scorer.config.window)
    cands = enumerate_candidates(seg, novel)
    if not cands:
        return QuoteInputs(novel.id, quote, cands, np.zeros((0, scorer.config.context_dim)), None)
    H = encode_context(scorer, seg)
    if scorer.arity == AUGMENTED:
        if vectors is None:
            raise ValueError("augmented scorer needs character and quote vectors")
        Xc, Xa = candidate_inputs(scorer, H, seg.quote_pos, cands, vectors.characters, vectors.quotes[quote.id])
    else:
        Xc, Xa = candidate_inputs(scorer, H, seg.quote_pos, cands)
    return QuoteInputs(novel.id, quote, cands, Xc, Xa)


def train_scorer(novels, config: ScorerConfig | None = None, vectors: dict[str, NovelVectors] | None = None,
                 init: ScorerModel | None = None) -> tuple[ScorerModel, list[float]]:
    """Maximize the likelihood of the speaker's mentions among the candidates.

    Quotes without a candidate that refers to the gold speaker carry no
    signal and are skipped. Returns the model and the per-epoch mean loss.
    """
    config = config or ScorerConfig()
    scorer = init.copy() if init is not None else ScorerModel(config)
    examples = []
    for novel in sorted(novels, key=lambda n: n.id):
        nv = vectors.get(novel.id) if vectors else None
        for q in novel.quotes:
            if q.speaker_id is None:
                continue
            inp = prepare_quote(scorer, novel, q, nv)
            if inp.candidates and inp.positive.any():
                examples.append(inp)
    if not examples:
        raise ValueError("no quote has a candidate mention of its speaker")
    log.info("training scorer (%s) on %d quotes", config.arity, len(examples))
    opt = Adam(config.lr, weight_decay=config.weight_decay)
    history = []
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, "scorer-epoch", epoch).permutation(len(examples))
        losses = []
        for b in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[b:b + config.batch_size]]
            total = None
            for ex in batch:
                loss, grads = quote_loss(scorer.params, ex.Xc, ex.Xa, ex.positive)
                losses.append(loss)
                if total is None:
                    total = grads
                else:
                    for k in total:
                        total[k] += grads[k]
            if len(batch) > 1:
                for k in total:
                    total[k] /= len(batch)
            opt.update(scorer.params, total)
        history.append(float(np.mean(losses)))
        log.info("epoch %d loss %.5f", epoch, history[-1])
    return scorer, history


@dataclass(frozen=True)
class QuoteResult:
    novel_id: str
    quote_id: str
    predicted: str  # entity id or ABSTAIN
    gold: str | None
    quote_type: str
    unanswerable: bool
    speaker_quotes: int  # quotes the gold speaker utters in the novel

    @property
    def correct(self) -> bool:
        return self.predicted != ABSTAIN and self.predicted == self.gold


def attribute(scorer: ScorerModel, novel: AnnotatedNovel, vectors: NovelVectors | None = None,
              quotes=None, window: int | None = None) -> list[QuoteResult]:
    """Highest-scoring candidate per quote; ties go to the earliest mention.

    Quotes with no candidate abstain.
    """
    if (scorer.arity == AUGMENTED) != (vectors is not None):
        raise ValueError(f"{scorer.arity} scorer called {'with' if vectors else 'without'} vectors")
    counts = Counter(q.speaker_id for q in novel.quotes if q.speaker_id is not None)
    out = []
    for q in (novel.quotes if quotes is None else quotes):
        inp = prepare_quote(scorer, novel, q, vectors, window)
        if inp.candidates:
            s = score_candidates(scorer, inp.Xc, inp.Xa)
            pred = inp.candidates[int(np.argmax(s))].entity_id
        else:
            pred = ABSTAIN
        unans = is_unanswerable(q, inp.candidates) if q.speaker_id is not None else False
        out.append(QuoteResult(novel.id, q.id, pred, q.speaker_id, q.quote_type, unans,
                               counts.get(q.speaker_id, 0)))
    return out


CATEGORIES = ("overall", "non-explicit", "explicit", "anaphoric", "implicit")
_MEMBERS = {
    "overall": {EXPLICIT, ANAPHORIC, IMPLICIT},
    "non-explicit": {ANAPHORIC, IMPLICIT},
    "explicit": {EXPLICIT},
    "anaphoric": {ANAPHORIC},
    "implicit": {IMPLICIT},
}


@dataclass
class AccuracyTable:
    """Accuracy and unanswerable share (percentages) per quote category.

    Categories without quotes hold ``None``.
    """
    accuracy: dict[str, float | None] = field(default_factory=dict)
    unanswerable: dict[str, float | None] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    novels: list[str] = field(default_factory=list)


def novel_unanswerable(results, min_quotes: int = 10) -> dict[str, float]:
    """Per-novel unanswerable percentage over evaluated quotes."""
    tot, bad = Counter(), Counter()
    for r in results:
        if r.gold is None or r.speaker_quotes < min_quotes:
            continue
        tot[r.novel_id] += 1
        bad[r.novel_id] += r.unanswerable
    return {n: 100.0 * bad[n] / tot[n] for n in tot}


def evaluate_attribution(results, min_quotes: int = 10, max_unanswerable: float | None = None) -> AccuracyTable:
    """Accuracy by quote type over quotes whose speaker has ``min_quotes``+
    quotes. Abstentions count as errors. ``max_unanswerable`` (percent)
    drops whole novels above that unanswerable rate."""
    keep = [r for r in results if r.gold is not None and r.speaker_quotes >= min_quotes]
    if max_unanswerable is not None:
        rates = novel_unanswerable(results, min_quotes)
        keep = [r for r in keep if rates[r.novel_id] <= max_unanswerable]
    table = AccuracyTable(novels=sorted({r.novel_id for r in keep}))
    for cat in CATEGORIES:
        rows = [r for r in keep if r.quote_type in _MEMBERS[cat]]
        table.counts[cat] = len(rows)
        if rows:
            table.accuracy[cat] = 100.0 * sum(r.correct for r in rows) / len(rows)
            table.unanswerable[cat] = 100.0 * sum(r.unanswerable for r in rows) / len(rows)
        else:
            table.accuracy[cat] = table.unanswerable[cat] = None
    return table
