"""Annotated novels: raw text plus quote, mention and character annotations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .drama import Character
from .text import Token, tokenize

EXPLICIT, ANAPHORIC, IMPLICIT = "explicit", "anaphoric", "implicit"
QUOTE_TYPES = (EXPLICIT, ANAPHORIC, IMPLICIT)


class NovelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Quote:
    id: str
    start: int  # first token, inclusive
    end: int  # last token, inclusive
    quote_type: str
    speaker_id: str | None
    chapter: int


@dataclass(frozen=True)
class Mention:
    start: int
    end: int  # inclusive
    entity_id: str | None
    quote_internal: bool = False


@dataclass
class AnnotatedNovel:
    id: str
    text: str
    tokens: list[Token]
    characters: list[Character]
    quotes: list[Quote]
    mentions: list[Mention]
    chapters: list[tuple[int, int]]  # half-open token ranges
    _by_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {c.id: c for c in self.characters}

    def character(self, cid: str) -> Character:
        return self._by_id[cid]

    def surface(self, start: int, end: int) -> str:
        """Source text covering tokens ``start..end`` (inclusive)."""
        return self.text[self.tokens[start].char_start:self.tokens[end].char_end]

    def quote_text(self, quote: Quote) -> str:
        return self.surface(quote.start, quote.end)

    def chapter_of(self, tok: int) -> int:
        for i, (a, b) in enumerate(self.chapters):
            if a <= tok < b:
                return i
        raise IndexError(tok)

    def quotes_by_speaker(self, quote_type: str | None = None) -> dict[str, list[Quote]]:
        out: dict[str, list[Quote]] = {}
        for q in self.quotes:
            if q.speaker_id is None or (quote_type and q.quote_type != quote_type):
                continue
            out.setdefault(q.speaker_id, []).append(q)
        return out


def resolve_alias(lexicon, surface: str) -> str | None:
    """Exact, case-insensitive alias lookup; ambiguous surfaces resolve to None."""
    key = surface.casefold().strip()
    hits = {c.id for c in lexicon if any(a.casefold() == key for a in c.aliases)}
    return hits.pop() if len(hits) == 1 else None


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise NovelValidationError(f"{where}: missing field {key!r}")
    return record[key]


def build_novel(novel_id: str, text: str, annotation: dict) -> AnnotatedNovel:
    """Validate ``annotation`` against ``text`` and assemble the novel.

    Mentions without an ``entity_id`` are resolved through the alias lexicon
    on their surface string.
    """
    tokens = tokenize(text)
    n = len(tokens)

    characters = []
    seen = set()
    for i, rec in enumerate(annotation.get("characters", [])):
        cid = str(_require(rec, "id", f"character[{i}]"))
        if cid in seen:
            raise NovelValidationError(f"character[{i}]: duplicate id {cid!r}")
        seen.add(cid)
        name = rec.get("name", cid)
        characters.append(Character(cid, name, frozenset(rec.get("aliases", ())) | {name}))

    chapters = []
    for i, rec in enumerate(annotation.get("chapters", [])):
        a = int(_require(rec, "start_tok", f"chapter[{i}]"))
        b = int(_require(rec, "end_tok", f"chapter[{i}]")) + 1  # inclusive on disk
        chapters.append((a, b))
    if not chapters and n:
        chapters = [(0, n)]
    expect = 0
    for i, (a, b) in enumerate(chapters):
        if a != expect or b <= a:
            raise NovelValidationError(f"chapter[{i}]: [{a},{b - 1}] does not continue partition at {expect}")
        expect = b
    if expect != n:
        raise NovelValidationError(f"chapters end at {expect}, document has {n} tokens")

    def span(rec, where):
        a = int(_require(rec, "start_tok", where))
        b = int(_require(rec, "end_tok", where))
        if not (0 <= a <= b < n):
            raise NovelValidationError(f"{where}: token range [{a},{b}] outside [0,{n})")
        return a, b

    quotes = []
    qids = set()
    for i, rec in enumerate(annotation.get("quotes", [])):
        qid = str(rec.get("id", i))
        where = f"quote {qid!r}"
        if qid in qids:
            raise NovelValidationError(f"{where}: duplicate id")
        qids.add(qid)
        a, b = span(rec, where)
        qtype = _require(rec, "type", where)
        if qtype not in QUOTE_TYPES:
            raise NovelValidationError(f"{where}: unknown quote type {qtype!r}")
        speaker = rec.get("speaker_id")
        if speaker is not None and speaker not in seen:
            raise NovelValidationError(f"{where}: unknown speaker {speaker!r}")
        chapter = rec.get("chapter")
        actual = next(k for k, (ca, cb) in enumerate(chapters) if ca <= a < cb)
        if chapter is None:
            chapter = actual
        elif int(chapter) != actual:
            raise NovelValidationError(f"{where}: chapter {chapter} but starts in chapter {actual}")
        quotes.append(Quote(qid, a, b, qtype, speaker, int(chapter)))

    ordered = sorted(quotes, key=lambda q: q.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start <= prev.end:
            raise NovelValidationError(f"quote {cur.id!r}: overlaps quote {prev.id!r}")

    mentions = []
    for i, rec in enumerate(annotation.get("mentions", [])):
        where = f"mention[{i}]"
        a, b = span(rec, where)
        eid = rec.get("entity_id")
        if eid is not None and eid not in seen:
            raise NovelValidationError(f"{where}: unknown entity {eid!r}")
        inside = _inside_quote(ordered, a, b)
        if eid is None:
            eid = resolve_alias(characters, text[tokens[a].char_start:tokens[b].char_end])
        mentions.append(Mention(a, b, eid, inside))

    return AnnotatedNovel(novel_id, text, tokens, characters, quotes, mentions, chapters)


def _inside_quote(ordered_quotes, a: int, b: int) -> bool:
    return any(q.start <= b and a <= q.end for q in ordered_quotes)


def parse_novel(text_file, annotation_file, novel_id: str | None = None) -> AnnotatedNovel:
    text_path, ann_path = Path(text_file), Path(annotation_file)
    text = text_path.read_text(encoding="utf-8")
    annotation = json.loads(ann_path.read_text(encoding="utf-8"))
    novel_id = novel_id or annotation.get("id") or text_path.stem
    try:
        return build_novel(novel_id, text, annotation)
    except NovelValidationError as e:
        raise NovelValidationError(f"{ann_path.name}: {e}") from None


def novel_to_annotation(novel: AnnotatedNovel) -> dict:
    """Inverse of :func:`build_novel` (resolved entity ids are written out)."""
    return {
        "id": novel.id,
        "characters": [
            {"id": c.id, "name": c.canonical_name, "aliases": sorted(c.aliases)}
            for c in novel.characters
        ],
        "chapters": [{"start_tok": a, "end_tok": b - 1} for a, b in novel.chapters],
        "quotes": [
            {"id": q.id, "start_tok": q.start, "end_tok": q.end, "type": q.quote_type,
             "speaker_id": q.speaker_id, "chapter": q.chapter}
            for q in novel.quotes
        ],
        "mentions": [
            {"start_tok": m.start, "end_tok": m.end, "entity_id": m.entity_id}
            for m in novel.mentions
        ],
    }
