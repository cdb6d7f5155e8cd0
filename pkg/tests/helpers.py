"""Fixture builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from charqa.novel import EXPLICIT, IMPLICIT, QUOTE_TYPES, build_novel


class NovelBuilder:
    """Assemble a novel one token at a time, recording annotation offsets."""

    def __init__(self, characters):
        # characters: {id: name} or {id: (name, [aliases])}
        self.characters = characters
        self.toks: list[str] = []
        self.quotes: list[dict] = []
        self.mentions: list[dict] = []
        self.chapter_starts = [0]

    def words(self, text: str):
        self.toks.extend(text.split())
        return self

    def mention(self, surface: str, entity_id: str | None = "auto"):
        start = len(self.toks)
        self.toks.extend(surface.split())
        rec = {"start_tok": start, "end_tok": len(self.toks) - 1}
        if entity_id == "auto":
            entity_id = next(cid for cid, v in self.characters.items()
                             if (v if isinstance(v, str) else v[0]) == surface)
        if entity_id is not None:
            rec["entity_id"] = entity_id
        self.mentions.append(rec)
        return self

    def quote(self, text: str, speaker: str | None, qtype: str = EXPLICIT):
        start = len(self.toks)
        self.toks.extend(['"', *text.split(), '"'])
        self.quotes.append({"id": f"q{len(self.quotes)}", "start_tok": start, "end_tok": len(self.toks) - 1,
                            "type": qtype, "speaker_id": speaker})
        return self

    def chapter(self):
        self.chapter_starts.append(len(self.toks))
        return self

    def annotation(self) -> dict:
        chars = []
        for cid, v in self.characters.items():
            name, aliases = (v, []) if isinstance(v, str) else v
            chars.append({"id": cid, "name": name, "aliases": list(aliases)})
        bounds = self.chapter_starts + [len(self.toks)]
        chapters = [{"start_tok": a, "end_tok": b - 1} for a, b in zip(bounds, bounds[1:])]
        return {"characters": chars, "chapters": chapters, "quotes": self.quotes, "mentions": self.mentions}

    def text(self) -> str:
        return " ".join(self.toks)

    def build(self, novel_id: str = "fixture"):
        return build_novel(novel_id, self.text(), self.annotation())


def random_novel(seed: int, n_chars: int = 4):
    """Random novel with overlapping-free quotes and mentions placed anywhere,
    some inside quotes, some unlinked (resolved or not through aliases)."""
    rng = np.random.default_rng(seed)
    names = {f"C{k}": (f"Name{k}", [f"Alias{k}", "Shared"]) for k in range(n_chars)}
    b = NovelBuilder(names)
    for _ in range(int(rng.integers(3, 25))):
        r = rng.random()
        if r < 0.35:
            b.words(" ".join(rng.choice(["the", "a", "walked", "room", ".", ","], size=int(rng.integers(1, 8)))))
        elif r < 0.6:
            k = int(rng.integers(n_chars))
            surface = str(rng.choice([f"Name{k}", f"Alias{k}", "Shared", "he"]))
            linked = rng.random() < 0.5
            b.mention(surface, f"C{k}" if linked and surface != "Shared" else None)
        else:
            body = " ".join(rng.choice(["yes", "no", "Name0", "well"], size=int(rng.integers(1, 6))))
            start = len(b.toks)
            b.quote(body, f"C{int(rng.integers(n_chars))}", str(rng.choice(QUOTE_TYPES)))
            if "Name0" in body.split() and rng.random() < 0.7:
                # an annotated mention inside the quote
                pos = start + 1 + body.split().index("Name0")
                b.mentions.append({"start_tok": pos, "end_tok": pos, "entity_id": "C0"})
    if not b.toks:
        b.words("end")
    return b.build(f"rand{seed}")


def unanswerable_fixture():
    """Quotes q0, q2 have their speaker named nearby; q1 and q3 do not (k = 2, N = 4)."""
    b = NovelBuilder({"A": "Ann", "B": "Bob", "C": "Cy"})
    b.quote("one", "A").words("said").mention("Ann").words(".")
    b.words("x " * 30).mention("Bob").words("waited .").quote("two", "C", IMPLICIT)
    b.words("y " * 30).quote("three", "B").words("said").mention("Bob").words(".")
    b.words("z " * 30).quote("four", "A", IMPLICIT).words("end .")
    return b.build()
