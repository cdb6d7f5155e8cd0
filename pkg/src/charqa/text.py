"""Offset-preserving tokenization shared by the drama and novel readers."""

from __future__ import annotations

import re
from dataclasses import dataclass

# Words are runs of word characters; every other non-space character is its
# own token. Apostrophes therefore split "don't" into don / ' / t.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int
    is_word: bool


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into word and punctuation tokens with character offsets.

    Offsets index the Python string (code points), so
    ``text[tok.char_start:tok.char_end] == tok.text`` always holds.
    """
    return [
        Token(m.group(), m.start(), m.end(), not _is_punct(m.group()))
        for m in _TOKEN_RE.finditer(text)
    ]


def _is_punct(piece: str) -> bool:
    return len(piece) == 1 and not (piece.isalnum() or piece == "_")


def detokenize(text: str, tokens: list[Token]) -> str:
    """Rebuild ``text`` from ``tokens`` plus the whitespace gaps between them."""
    out = []
    pos = 0
    for tok in tokens:
        out.append(text[pos:tok.char_start])
        out.append(tok.text)
        pos = tok.char_end
    out.append(text[pos:])
    return "".join(out)
