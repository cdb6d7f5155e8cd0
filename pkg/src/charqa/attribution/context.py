"""Masked context windows around quotes and the candidate mentions in them."""

from __future__ import annotations

from dataclasses import dataclass

from ..novel import AnnotatedNovel, Mention, Quote, resolve_alias

QUOTE_TOKEN = "[QUOTE]"
ALTQUOTE_TOKEN = "[ALTQUOTE]"
DEFAULT_WINDOW = 100


@dataclass(frozen=True)
class ContextSegment:
    quote_id: str
    tokens: tuple[str, ...]
    doc_spans: tuple[tuple[int, int], ...]  # document token range behind each position
    quote_pos: int
    lo: int  # first document token in the window
    hi: int  # last document token in the window
    window: int

    def __len__(self):
        return len(self.tokens)

    def position_of(self, doc_index: int) -> int | None:
        """Segment position of an unmasked document token."""
        for pos, (a, b) in enumerate(self.doc_spans):
            if a == doc_index == b and self.tokens[pos] not in (QUOTE_TOKEN, ALTQUOTE_TOKEN):
                return pos
        return None


@dataclass(frozen=True)
class CandidateMention:
    mention: Mention
    entity_id: str
    start: int  # segment positions, inclusive
    end: int


def build_context(novel: AnnotatedNovel, quote: Quote, w: int = DEFAULT_WINDOW) -> ContextSegment:
    """Window of ``w`` tokens either side of ``quote`` with every quote masked.

    The focal quote collapses to one ``[QUOTE]`` token; each other quote that
    overlaps the window, even partially, collapses to one ``[ALTQUOTE]``.
    """
    n = len(novel.tokens)
    lo, hi = max(0, quote.start - w), min(n - 1, quote.end + w)
    spans = sorted(
        (q for q in novel.quotes if q.start <= hi and lo <= q.end),
        key=lambda q: q.start,
    )
    tokens, doc_spans = [], []
    quote_pos = -1
    i, k = lo, 0
    while i <= hi:
        while k < len(spans) and spans[k].end < i:
            k += 1
        if k < len(spans) and spans[k].start <= i:
            q = spans[k]
            if q.id == quote.id:
                quote_pos = len(tokens)
                tokens.append(QUOTE_TOKEN)
            else:
                tokens.append(ALTQUOTE_TOKEN)
            doc_spans.append((max(q.start, lo), min(q.end, hi)))
            i = q.end + 1
            continue
        tokens.append(novel.tokens[i].text)
        doc_spans.append((i, i))
        i += 1
    return ContextSegment(quote.id, tuple(tokens), tuple(doc_spans), quote_pos, lo, hi, w)


def enumerate_candidates(segment: ContextSegment, novel: AnnotatedNovel, lexicon=None) -> list[CandidateMention]:
    """Every in-window, non-quote mention that resolves to a character.

    Entity links from the annotation win; otherwise the surface string goes
    through the alias lexicon. The list is never truncated.
    """
    lexicon = novel.characters if lexicon is None else lexicon
    known = {c.id for c in lexicon}
    index = {a: pos for pos, (a, b) in enumerate(segment.doc_spans) if a == b
             and segment.tokens[pos] not in (QUOTE_TOKEN, ALTQUOTE_TOKEN)}
    out = []
    for m in novel.mentions:
        if m.quote_internal or m.start < segment.lo or m.end > segment.hi:
            continue
        s, e = index.get(m.start), index.get(m.end)
        if s is None or e is None:
            continue  # touches a masked quote
        eid = m.entity_id if m.entity_id is not None else resolve_alias(lexicon, novel.surface(m.start, m.end))
        if eid is None or eid not in known:
            continue
        out.append(CandidateMention(m, eid, s, e))
    out.sort(key=lambda c: (c.start, c.end))
    return out


def is_unanswerable(quote: Quote, candidates: list[CandidateMention]) -> bool:
    if quote.speaker_id is None:
        raise ValueError(f"quote {quote.id!r} has no gold speaker")
    return all(c.entity_id != quote.speaker_id for c in candidates)
