"""Verification scoring: per-query AUC, segment/play aggregation, and the
character-vs-character (CC) and character-vs-quote (CQ) novel protocols."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .dataset import QuerySet, UtteranceCollection
from .drama import Utterance
from .embedder import cosine
from .novel import EXPLICIT, AnnotatedNovel

SCENE, PLAY, CC, CQ = "scene", "play", "CC", "CQ"


def auc(positive_score: float, negative_scores: Sequence[float]) -> float:
    """Single-positive AUC: share of negatives ranked below, ties count half."""
    neg = np.asarray(negative_scores, dtype=np.float64)
    if neg.size == 0:
        raise ValueError("AUC is undefined without negatives")
    below = np.count_nonzero(neg < positive_score)
    ties = np.count_nonzero(neg == positive_score)
    return (below + 0.5 * ties) / neg.size


def auc_multi(positive_scores: Sequence[float], negative_scores: Sequence[float]) -> float:
    """Mann-Whitney AUC with several positives (mean of single-positive AUCs)."""
    if len(positive_scores) == 0:
        raise ValueError("AUC is undefined without positives")
    return float(np.mean([auc(p, negative_scores) for p in positive_scores]))


class _Encoder:
    """Memoizes collection vectors by key for the duration of one evaluation."""

    def __init__(self, model):
        self.model = model
        self.cache: dict[str, np.ndarray] = {}

    def __call__(self, coll: UtteranceCollection) -> np.ndarray:
        v = self.cache.get(coll.key)
        if v is None:
            v = self.cache[coll.key] = np.asarray(self.model.encode_collection(coll), dtype=np.float64)
        return v


def query_aucs(model, queryset: QuerySet) -> list[float]:
    enc = model if isinstance(model, _Encoder) else _Encoder(model)
    targets = [(t.character_id, enc(t)) for t in queryset.targets]
    out = []
    for q in queryset.queries:
        v = enc(q)
        pos, neg = None, []
        for cid, t in targets:
            s = cosine(v, t)
            if cid == q.character_id:
                pos = s
            else:
                neg.append(s)
        if pos is None:
            raise ValueError(f"{queryset.segment_id}: no target for query character {q.character_id!r}")
        out.append(auc(pos, neg))
    return out


def eval_segment(model, queryset: QuerySet) -> float:
    """Mean per-query AUC within one segment."""
    return float(np.mean(query_aucs(model, queryset)))


@dataclass
class AUCReport:
    protocol: str
    per_segment: dict[str, float] = field(default_factory=dict)
    per_play: dict[str, float] = field(default_factory=dict)
    mean: float = float("nan")
    std: float = float("nan")


def eval_corpus(model, querysets_by_play: dict[str, list[QuerySet]], protocol: str = SCENE) -> AUCReport:
    """Per-play mean over segments, then mean and population std over plays."""
    enc = _Encoder(model)
    report = AUCReport(protocol)
    for play_id in sorted(querysets_by_play):
        seg_scores = []
        for qs in sorted(querysets_by_play[play_id], key=lambda q: q.segment_id):
            s = eval_segment(enc, qs)
            report.per_segment[qs.segment_id] = s
            seg_scores.append(s)
        if seg_scores:
            report.per_play[play_id] = float(np.mean(seg_scores))
    if report.per_play:
        vals = np.array(list(report.per_play.values()))
        report.mean = float(vals.mean())
        report.std = float(vals.std())
    return report


# ----------------------------------------------------------------------------
# novels

def _quote_collection(novel: AnnotatedNovel, quotes, character_id: str, key: str, origin: str):
    utts = tuple(Utterance(character_id, novel.quote_text(q), i) for i, q in enumerate(quotes))
    return UtteranceCollection(character_id, utts, origin, f"{novel.id}/{key}")


def _check_novel(novel: AnnotatedNovel):
    explicit = novel.quotes_by_speaker(EXPLICIT)
    if len(explicit) < 2:
        raise ValueError(f"{novel.id}: need at least 2 characters with explicit quotes, found {len(explicit)}")
    if len(novel.chapters) < 2:
        raise ValueError(f"{novel.id}: need at least 2 chapters, found {len(novel.chapters)}")


def _cc_queries(novel: AnnotatedNovel):
    """(chapter, character, explicit quotes of that character in the chapter)."""
    explicit = novel.quotes_by_speaker(EXPLICIT)
    for k in range(len(novel.chapters)):
        for cid in sorted(explicit):
            qs = [q for q in explicit[cid] if q.chapter == k]
            if qs:
                yield k, cid, qs


def cc_query_aucs(novel: AnnotatedNovel, model) -> list[float]:
    _check_novel(novel)
    enc = model if isinstance(model, _Encoder) else _Encoder(model)
    everyone = novel.quotes_by_speaker()
    out = []
    for k, cid, quotes in _cc_queries(novel):
        qv = enc(_quote_collection(novel, quotes, cid, f"ch{k}", "cc-query"))
        pos, neg = None, []
        for other in sorted(everyone):
            held = [q for q in everyone[other] if q.chapter != k]
            if not held:
                continue
            s = cosine(qv, enc(_quote_collection(novel, held, other, f"not-ch{k}", "cc-target")))
            if other == cid:
                pos = s
            else:
                neg.append(s)
        if pos is None or not neg:
            continue
        out.append(auc(pos, neg))
    return out


def cq_query_aucs(novel: AnnotatedNovel, model) -> list[float]:
    _check_novel(novel)
    enc = model if isinstance(model, _Encoder) else _Encoder(model)
    spoken = [q for q in novel.quotes if q.speaker_id is not None]
    out = []
    for k, cid, quotes in _cc_queries(novel):
        qv = enc(_quote_collection(novel, quotes, cid, f"ch{k}", "cc-query"))
        pos, neg = [], []
        for q in spoken:
            if q.chapter == k:
                continue
            s = cosine(qv, enc(_quote_collection(novel, [q], q.speaker_id, f"q:{q.id}", "quote")))
            (pos if q.speaker_id == cid else neg).append(s)
        if not pos or not neg:
            continue
        out.append(auc_multi(pos, neg))
    return out


def eval_cc(novel: AnnotatedNovel, model) -> float:
    """Chapter-level explicit-quote queries against per-character collections
    drawn from the other chapters."""
    scores = cc_query_aucs(novel, model)
    return float(np.mean(scores)) if scores else float("nan")


def eval_cq(novel: AnnotatedNovel, model) -> float:
    """Like :func:`eval_cc` but every held-out quote is its own target."""
    scores = cq_query_aucs(novel, model)
    return float(np.mean(scores)) if scores else float("nan")


def eval_novels(novels, model, protocol: str) -> AUCReport:
    fn = {CC: eval_cc, CQ: eval_cq}[protocol]
    report = AUCReport(protocol)
    for novel in sorted(novels, key=lambda n: n.id):
        s = fn(novel, model)
        if not math.isnan(s):
            report.per_play[novel.id] = s
    if report.per_play:
        vals = np.array(list(report.per_play.values()))
        report.mean, report.std = float(vals.mean()), float(vals.std())
    return report


# ----------------------------------------------------------------------------
# significance

@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    n: int
    mean_diff: float
    degenerate: bool = False


def paired_ttest(pairs: Sequence[tuple[float, float]]) -> TTestResult:
    """Two-sided paired t-test on ``second - first`` of each pair."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two (a, b) pairs")
    d = arr[:, 1] - arr[:, 0]
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd <= 1e-12 * max(1.0, abs(mean)):
        if abs(mean) <= 1e-12:
            return TTestResult(0.0, 1.0, n, mean, True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, n, mean, True)
    t = mean / (sd / math.sqrt(n))
    p = float(2 * stats.t.sf(abs(t), df=n - 1))
    return TTestResult(float(t), min(p, 1.0), n, mean)
