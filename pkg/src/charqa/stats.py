"""Corpus summary counts (segments, utterances, queries, targets per query)."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class SplitStats:
    split: str
    segments: int = 0
    utterances: int = 0
    queries: int = 0
    targets_per_query: float = 0.0


@dataclass(frozen=True)
class CorpusStats:
    mode: str
    rows: tuple[SplitStats, ...] = field(default_factory=tuple)

    def row(self, split: str) -> SplitStats:
        for r in self.rows:
            if r.split == split:
                return r
        return SplitStats(split)


def corpus_stats(plays, querysets, mode: str = "scene") -> CorpusStats:
    """Summarize query sets per split.

    ``plays`` and ``querysets`` are either dicts keyed by split name or plain
    lists (reported as split ``"all"``). Only segments that produced a query
    set are counted; targets/query is the mean target count over segments.
    """
    if not isinstance(plays, dict):
        plays, querysets = {"all": list(plays)}, {"all": list(querysets)}
    rows = []
    for split in plays:
        seg_len = {
            seg.id: len(seg.utterances)
            for p in plays[split]
            for seg in p.units(mode)
        }
        qsets = querysets.get(split, [])
        n_targets = [len(qs.targets) for qs in qsets]
        rows.append(SplitStats(
            split=split,
            segments=len(qsets),
            utterances=sum(seg_len.get(qs.segment_id, 0) for qs in qsets),
            queries=sum(len(qs.queries) for qs in qsets),
            targets_per_query=sum(n_targets) / len(n_targets) if n_targets else 0.0,
        ))
    return CorpusStats(mode, tuple(rows))
