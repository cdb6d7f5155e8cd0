"""Reader for the lightweight drama markup used to build verification corpora.

Grammar (tags lowercase, attribute values double-quoted)::

    <play id=".." title=".." author="..">
      <act n="..">            optional
        <scene n="..">        optional
          <sp who="NAME">line of dialogue</sp>

Anything outside ``<sp>`` blocks (stage directions, front matter) is dropped.
"""

from __future__ import annotations

import html
import re
from dataclasses import dataclass, field
from functools import cached_property

from .text import Token, tokenize

SCENE, ACT, WHOLE = "scene", "act", "whole-play"

_TAG_RE = re.compile(r"<(/?)([A-Za-z][\w-]*)((?:\s+[\w-]+\s*=\s*\"[^\"]*\")*)\s*(/?)>")
_ATTR_RE = re.compile(r"([\w-]+)\s*=\s*\"([^\"]*)\"")
_ALLOWED_PARENTS = {
    "play": {None},
    "act": {"play"},
    "scene": {"play", "act"},
    "sp": {"play", "act", "scene"},
}


class DramaParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(source)
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class Character:
    id: str
    canonical_name: str
    aliases: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.aliases:
            object.__setattr__(self, "aliases", frozenset({self.canonical_name}))
        elif self.canonical_name not in self.aliases:
            object.__setattr__(self, "aliases", self.aliases | {self.canonical_name})


@dataclass(frozen=True)
class Utterance:
    speaker_id: str
    text: str
    ordinal: int  # position within the owning segment
    line: int = 0  # source line of the opening <sp>

    @cached_property
    def tokens(self) -> list[Token]:
        return tokenize(self.text)


@dataclass(frozen=True)
class Segment:
    id: str
    kind: str
    utterances: tuple[Utterance, ...]

    @property
    def characters(self) -> set[str]:
        return {u.speaker_id for u in self.utterances}

    def by_character(self) -> dict[str, list[Utterance]]:
        groups: dict[str, list[Utterance]] = {}
        for u in self.utterances:
            groups.setdefault(u.speaker_id, []).append(u)
        return groups


@dataclass(frozen=True)
class Play:
    id: str
    title: str
    author: str
    segments: tuple[Segment, ...]
    characters: tuple[Character, ...]
    utterances: tuple[Utterance, ...] = field(repr=False, default=())
    scene_eligible: bool = True

    def whole(self) -> Segment:
        """The whole play as a single segment (Play split unit)."""
        return Segment(
            f"{self.id}/play",
            WHOLE,
            tuple(
                Utterance(u.speaker_id, u.text, i, u.line)
                for i, u in enumerate(self.utterances)
            ),
        )

    def units(self, mode: str) -> list[Segment]:
        if mode == "play":
            return [self.whole()]
        if mode == "scene":
            return list(self.segments) if self.scene_eligible else []
        raise ValueError(f"unknown split mode {mode!r}")

    @property
    def character_ids(self) -> set[str]:
        return {c.id for c in self.characters}


def _line_of(markup: str, pos: int) -> int:
    return markup.count("\n", 0, pos) + 1


def parse_play(markup: str, source: str | None = None) -> Play:
    """Parse one play. Raises :class:`DramaParseError` with a line number."""
    stack: list[tuple[str, dict, int, int]] = []  # name, attrs, line, block
    play_attrs: dict | None = None
    # (container kind, container label, sp list) in document order
    blocks: list[tuple[str | None, str, list]] = []
    all_sps: list[tuple[str, str, int]] = []
    sp_open: tuple[str, int, int, int] | None = None  # who, text start, line, block
    saw_scene = saw_act = False
    pos = 0

    def err(msg, at):
        raise DramaParseError(msg, _line_of(markup, at), source)

    for m in _TAG_RE.finditer(markup):
        closing, name, rawattrs, selfclose = m.group(1), m.group(2), m.group(3), m.group(4)
        if sp_open is None:
            stray = markup[pos:m.start()]
            if "<" in stray:
                err("malformed tag", pos + stray.index("<"))
        pos = m.end()
        if name not in _ALLOWED_PARENTS:
            err(f"unknown tag <{name}>", m.start())
        if sp_open is not None and not (closing and name == "sp"):
            err(f"tag <{'/' if closing else ''}{name}> inside <sp>", m.start())
        if selfclose:
            err(f"self-closing <{name}/> not allowed", m.start())
        if closing:
            if not stack or stack[-1][0] != name:
                expected = stack[-1][0] if stack else None
                err(f"unexpected </{name}> (open: {expected})", m.start())
            stack.pop()
            if name == "sp":
                who, start, line, block = sp_open
                text = html.unescape(markup[start:m.start()])
                text = " ".join(text.split())
                if text:
                    all_sps.append((who, text, line))
                    blocks[block][2].append(all_sps[-1])
                sp_open = None
            continue

        attrs = dict(_ATTR_RE.findall(rawattrs))
        parent = stack[-1][0] if stack else None
        if parent not in _ALLOWED_PARENTS[name]:
            err(f"<{name}> not allowed inside <{parent}>", m.start())
        line = _line_of(markup, m.start())
        block = stack[-1][3] if stack else 0
        if name == "play":
            if play_attrs is not None:
                err("more than one <play>", m.start())
            play_attrs = attrs
            blocks.append((None, "", []))
            block = 0
        elif name == "act":
            saw_act = True
            blocks.append((ACT, attrs.get("n", str(sum(b[0] == ACT for b in blocks) + 1)), []))
            block = len(blocks) - 1
        elif name == "scene":
            saw_scene = True
            act_label = next((a.get("n", "") for t, a, _, _ in reversed(stack) if t == "act"), "")
            n = attrs.get("n", str(sum(b[0] == SCENE for b in blocks) + 1))
            blocks.append((SCENE, f"{act_label}.{n}" if act_label else n, []))
            block = len(blocks) - 1
        elif name == "sp":
            who = attrs.get("who")
            if who is None or not who.strip():
                err("<sp> without who attribute", m.start())
            if "," in who:
                err(f"multi-speaker who={who!r} not supported", m.start())
            sp_open = (who.strip(), m.end(), line, block)
        stack.append((name, attrs, line, block))

    if stack:
        name, _, line, _ = stack[-1]
        raise DramaParseError(f"unclosed <{name}>", line, source)
    if play_attrs is None:
        raise DramaParseError("no <play> element", 1, source)
    tail = markup[pos:]
    if "<" in tail:
        err("malformed tag", pos + tail.index("<"))

    play_id = play_attrs.get("id") or (source or "play")
    # lines sitting directly in an act that also has scenes stay in the play
    # but belong to no scene segment
    seg_kind = SCENE if saw_scene else ACT if saw_act else WHOLE
    segments = []
    if seg_kind != WHOLE:
        for kind, label, sps in blocks:
            if kind != seg_kind or not sps:
                continue
            utts = tuple(Utterance(w, t, i, ln) for i, (w, t, ln) in enumerate(sps))
            segments.append(Segment(f"{play_id}/{kind}-{label}", kind, utts))
    utterances = tuple(Utterance(w, t, i, ln) for i, (w, t, ln) in enumerate(all_sps))
    names = sorted({w for w, _, _ in all_sps})
    play = Play(
        id=play_id,
        title=play_attrs.get("title", ""),
        author=play_attrs.get("author", ""),
        segments=tuple(segments),
        characters=tuple(Character(n, n) for n in names),
        utterances=utterances,
        scene_eligible=seg_kind != WHOLE,
    )
    if seg_kind == WHOLE:
        play = _replace_segments(play, (play.whole(),))
    return play


def _replace_segments(play: Play, segments) -> Play:
    return Play(play.id, play.title, play.author, tuple(segments), play.characters,
                play.utterances, play.scene_eligible)


def render_play(play_id: str, title: str, author: str, acts) -> str:
    """Serialize ``acts -> scenes -> [(who, text), ...]`` to markup."""
    out = [f'<play id="{html.escape(play_id)}" title="{html.escape(title)}" author="{html.escape(author)}">']
    for a, scenes in enumerate(acts, 1):
        out.append(f'<act n="{a}">')
        for s, lines in enumerate(scenes, 1):
            out.append(f'<scene n="{s}">')
            for who, text in lines:
                out.append(f'<sp who="{html.escape(who)}">{html.escape(text, quote=False)}</sp>')
            out.append("</scene>")
        out.append("</act>")
    out.append("</play>")
    return "\n".join(out) + "\n"
