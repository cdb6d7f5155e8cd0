"""Verification datasets: play-level splits, query/target sets, train samples."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .drama import Play, Segment, Utterance

QUERY, TARGET = "query", "target"
TRAIN_SAMPLE = 8
TRAIN_MIN_LINES = 2 * TRAIN_SAMPLE
EVAL_MIN_LINES = 2


@dataclass(frozen=True)
class UtteranceCollection:
    character_id: str
    utterances: tuple[Utterance, ...]
    origin: str
    segment_id: str = ""

    def __post_init__(self):
        if not self.utterances:
            raise ValueError(f"empty collection for {self.character_id!r}")
        bad = [u.speaker_id for u in self.utterances if u.speaker_id != self.character_id]
        if bad:
            raise ValueError(f"collection for {self.character_id!r} holds lines of {bad[0]!r}")

    @property
    def key(self) -> str:
        return f"{self.segment_id}|{self.character_id}|{self.origin}"

    @property
    def texts(self) -> list[str]:
        return [u.text for u in self.utterances]


@dataclass(frozen=True)
class QuerySet:
    segment_id: str
    queries: tuple[UtteranceCollection, ...]
    targets: tuple[UtteranceCollection, ...]
    play_id: str = ""

    def target_for(self, character_id: str) -> UtteranceCollection:
        for t in self.targets:
            if t.character_id == character_id:
                return t
        raise KeyError(character_id)


@dataclass(frozen=True)
class TrainInstance:
    segment_id: str
    character_id: str
    query: UtteranceCollection
    target: UtteranceCollection


def derive_rng(seed: int, *parts) -> np.random.Generator:
    """Generator keyed on ``seed`` and any mix of ints and strings."""
    key = [int(seed) & 0xFFFFFFFF]
    for p in parts:
        key.append(zlib.crc32(p.encode("utf-8")) if isinstance(p, str) else int(p) & 0xFFFFFFFF)
    return np.random.default_rng(key)


def split_corpus(plays: list[Play], ratios=(0.8, 0.1, 0.1), rng_seed: int = 0) -> dict[str, list[Play]]:
    """Assign whole plays to train/val/test.

    Split sizes are floored; the remainder goes to train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if len(plays) < len(ratios):
        raise ValueError(f"need at least {len(ratios)} plays to split, got {len(plays)}")
    ids = sorted(p.id for p in plays)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate play ids")
    by_id = {p.id: p for p in plays}
    order = derive_rng(rng_seed, "split").permutation(len(ids))
    n = len(ids)
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    n_train = n - n_val - n_test
    shuffled = [by_id[ids[i]] for i in order]
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train:n_train + n_val],
        "test": shuffled[n_train + n_val:],
    }


def _play_of(segment_id: str) -> str:
    return segment_id.rsplit("/", 1)[0]


def build_eval_queryset(segment: Segment, rng_seed: int = 0) -> QuerySet | None:
    """Half/half query-target construction; ``None`` when the segment has
    fewer than two characters with at least two lines each."""
    groups = segment.by_character()
    eligible = [c for c in sorted(groups) if len(groups[c]) >= EVAL_MIN_LINES]
    if len(eligible) < 2:
        return None
    rng = derive_rng(rng_seed, "eval", segment.id)
    queries, targets = [], []
    for cid in sorted(groups):
        utts = groups[cid]
        if cid in eligible:
            picked = np.sort(rng.choice(len(utts), size=len(utts) // 2, replace=False))
            chosen = set(picked.tolist())
            queries.append(UtteranceCollection(cid, tuple(utts[i] for i in picked), QUERY, segment.id))
            rest = tuple(u for i, u in enumerate(utts) if i not in chosen)
        else:
            rest = tuple(utts)
        targets.append(UtteranceCollection(cid, rest, TARGET, segment.id))
    return QuerySet(segment.id, tuple(queries), tuple(targets), _play_of(segment.id))


def build_train_instances(segment: Segment, rng_seed: int = 0, epoch: int = 0) -> list[TrainInstance]:
    """Disjoint 8-line query/target samples for every character with 16+ lines.

    Samples are redrawn per epoch; ``(seed, epoch, segment)`` fixes them.
    """
    groups = segment.by_character()
    rng = derive_rng(rng_seed, "train", epoch, segment.id)
    out = []
    for cid in sorted(groups):
        utts = groups[cid]
        if len(utts) < TRAIN_MIN_LINES:
            continue
        picked = rng.choice(len(utts), size=2 * TRAIN_SAMPLE, replace=False)
        q = tuple(utts[i] for i in np.sort(picked[:TRAIN_SAMPLE]))
        t = tuple(utts[i] for i in np.sort(picked[TRAIN_SAMPLE:]))
        out.append(TrainInstance(
            segment.id, cid,
            UtteranceCollection(cid, q, QUERY, segment.id),
            UtteranceCollection(cid, t, TARGET, segment.id),
        ))
    return out


def instances_as_querysets(instances: Iterable[TrainInstance]) -> list[QuerySet]:
    """Group train instances per segment so they can be counted like eval sets."""
    grouped: dict[str, list[TrainInstance]] = {}
    for inst in instances:
        grouped.setdefault(inst.segment_id, []).append(inst)
    return [
        QuerySet(sid, tuple(i.query for i in insts), tuple(i.target for i in insts), _play_of(sid))
        for sid, insts in grouped.items()
    ]


def audit_records(split: str, querysets: Iterable[QuerySet]) -> list[dict]:
    rows = []
    for qs in querysets:
        for coll in (*qs.queries, *qs.targets):
            rows.append({
                "split": split,
                "segment_id": qs.segment_id,
                "character_id": coll.character_id,
                "origin": coll.origin,
                "ordinals": [u.ordinal for u in coll.utterances],
            })
    return rows


def write_audit(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_audit(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def querysets_from_audit(records: Iterable[dict], segments: dict[str, Segment], split: str | None = None) -> list[QuerySet]:
    """Rebuild query sets from audit records and the parsed segments they cite."""
    grouped: dict[str, dict[str, list]] = {}
    for rec in records:
        if split is not None and rec["split"] != split:
            continue
        seg = segments[rec["segment_id"]]
        utts = tuple(seg.utterances[i] for i in rec["ordinals"])
        coll = UtteranceCollection(rec["character_id"], utts, rec["origin"], seg.id)
        bucket = grouped.setdefault(seg.id, {QUERY: [], TARGET: []})
        bucket[rec["origin"]].append(coll)
    return [
        QuerySet(sid, tuple(g[QUERY]), tuple(g[TARGET]), _play_of(sid))
        for sid, g in grouped.items()
    ]
