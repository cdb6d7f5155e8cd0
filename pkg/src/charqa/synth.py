"""Synthetic corpora with controllable, speaker-specific style.

Every speaker is assigned a style archetype: a few signature function words
and a preferred punctuation pattern. Utterances mix those markers into
content words shared by everyone in the play, so the speaker signal is a
small fraction of each utterance's features.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .dataset import derive_rng
from .drama import parse_play, render_play
from .novel import ANAPHORIC, EXPLICIT, IMPLICIT, AnnotatedNovel, build_novel

_SIGNATURE_WORDS = [
    "aye", "nay", "indeed", "quite", "alas", "pray", "prithee", "hence",
    "thither", "whence", "yea", "forsooth", "verily", "marry", "perchance", "anon",
    "hither", "lo", "tis", "twas", "ere", "rather", "perhaps", "ever",
]
_PUNCT = [".", "!", "?", ";", ":", "-", ","]


@dataclass(frozen=True)
class Archetype:
    words: tuple[str, ...]
    punct_probs: tuple[float, ...]


def archetypes(n: int = 8, words_each: int = 3, seed: int = 0, punct_peak: float = 0.7) -> list[Archetype]:
    """``n`` styles with disjoint signature words and distinct punctuation."""
    if n * words_each > len(_SIGNATURE_WORDS):
        raise ValueError("not enough signature words for that many archetypes")
    rng = derive_rng(seed, "archetypes")
    words = rng.permutation(_SIGNATURE_WORDS)
    out = []
    for k in range(n):
        probs = np.full(len(_PUNCT), 0.02)
        probs[k % len(_PUNCT)] += punct_peak
        probs[(k * 3 + 1) % len(_PUNCT)] += punct_peak / 3
        probs /= probs.sum()
        out.append(Archetype(tuple(words[k * words_each:(k + 1) * words_each]), tuple(probs)))
    return out


def pseudo_words(rng: np.random.Generator, n: int, min_len: int = 4, max_len: int = 9) -> list[str]:
    letters = np.array(list(string.ascii_lowercase))
    return ["".join(rng.choice(letters, size=rng.integers(min_len, max_len + 1))) for _ in range(n)]


def utterance(rng: np.random.Generator, style: Archetype, vocab: list[str],
              n_content: int = 10, marker_prob: float = 1.0) -> str:
    words = list(rng.choice(vocab, size=n_content))
    if rng.random() < marker_prob:
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(style.words)))
    mark = _PUNCT[int(rng.choice(len(_PUNCT), p=style.punct_probs))]
    return " ".join(words) + f" {mark}"


@dataclass
class PlaySpec:
    n_plays: int = 40
    n_characters: int = 6
    acts: int = 3
    scenes_per_act: int = 4
    speakers_per_scene: int = 4
    lines_per_speaker: tuple[int, int] = (20, 28)
    vocab_size: int = 30
    n_content: int = 20
    marker_prob: float = 0.25
    punct_peak: float = 0.05
    n_archetypes: int = 8


def generate_play_markup(spec: PlaySpec = PlaySpec(), seed: int = 0) -> dict[str, str]:
    """Markup text for ``spec.n_plays`` plays, keyed by play id."""
    styles = archetypes(spec.n_archetypes, seed=seed, punct_peak=spec.punct_peak)
    out = {}
    for p in range(spec.n_plays):
        rng = derive_rng(seed, "play", p)
        vocab = pseudo_words(rng, spec.vocab_size)
        cast = [f"CHAR{c}" for c in range(spec.n_characters)]
        cast_styles = rng.choice(len(styles), size=spec.n_characters, replace=False)
        acts = []
        for _ in range(spec.acts):
            scenes = []
            for _ in range(spec.scenes_per_act):
                present = rng.choice(spec.n_characters, size=spec.speakers_per_scene, replace=False)
                lines = []
                for c in present:
                    k = int(rng.integers(spec.lines_per_speaker[0], spec.lines_per_speaker[1] + 1))
                    lines.extend((cast[c], utterance(rng, styles[cast_styles[c]], vocab,
                                                     spec.n_content, spec.marker_prob)) for _ in range(k))
                order = rng.permutation(len(lines))
                scenes.append([lines[i] for i in order])
            acts.append(scenes)
        pid = f"synth{p:03d}"
        out[pid] = render_play(pid, f"Synthetic Play {p}", "Generator", acts)
    return out


def generate_plays(spec: PlaySpec = PlaySpec(), seed: int = 0):
    return [parse_play(m, source=pid) for pid, m in generate_play_markup(spec, seed).items()]


@dataclass
class NovelSpec:
    """Novels whose non-explicit quotes are only resolvable through style.

    Explicit quotes are followed (or preceded) by ``said NAME``. Anaphoric and
    implicit quotes follow a narrative sentence naming the speaker together
    with ``distractors`` other characters in random order; anaphoric ones
    add an unresolvable pronoun.
    """
    n_novels: int = 12
    n_characters: int = 4
    chapters: int = 3
    quotes_per_character: tuple[int, int] = (24, 32)
    type_probs: tuple[float, float, float] = (0.4, 0.3, 0.3)  # explicit, anaphoric, implicit
    name_first_prob: float = 0.2
    distractors: int = 1
    vocab_size: int = 30
    n_content: int = 10
    marker_prob: float = 1.0
    punct_peak: float = 0.7
    n_archetypes: int = 8


_NARRATIVE = ["looked", "toward", "the", "door", "window", "garden", "stood", "waited", "by", "near"]


def _names(rng, n: int) -> list[str]:
    names: list[str] = []
    while len(names) < n:
        w = pseudo_words(rng, 1, 4, 7)[0].capitalize()
        if w not in names:
            names.append(w)
    return names


def generate_novel(spec: NovelSpec = NovelSpec(), seed: int = 0, index: int = 0,
                   styles: list[Archetype] | None = None) -> AnnotatedNovel:
    """One synthetic novel; every token is separated by a single space."""
    styles = styles or archetypes(spec.n_archetypes, seed=seed, punct_peak=spec.punct_peak)
    rng = derive_rng(seed, "novel", index)
    vocab = pseudo_words(rng, spec.vocab_size)
    names = _names(rng, spec.n_characters)
    ids = [f"C{k}" for k in range(spec.n_characters)]
    cast_styles = rng.choice(len(styles), size=spec.n_characters, replace=False)
    speakers = []
    for c in range(spec.n_characters):
        k = int(rng.integers(spec.quotes_per_character[0], spec.quotes_per_character[1] + 1))
        speakers.extend([c] * k)
    speakers = [speakers[i] for i in rng.permutation(len(speakers))]
    per_chapter = np.array_split(np.arange(len(speakers)), spec.chapters)

    toks: list[str] = []
    quotes, mentions, chapters = [], [], []

    def mention(c: int):
        mentions.append({"start_tok": len(toks), "end_tok": len(toks), "entity_id": ids[c]})
        toks.append(names[c])

    def narrative(c: int):
        others = [o for o in range(spec.n_characters) if o != c]
        named = [c] + list(rng.choice(others, size=spec.distractors, replace=False))
        named = [named[i] for i in rng.permutation(len(named))]
        for k, o in enumerate(named):
            if k:
                toks.append("and")
            mention(int(o))
        toks.extend(rng.choice(_NARRATIVE, size=3).tolist())
        toks.append(".")

    for ch, block in enumerate(per_chapter):
        start = len(toks)
        toks.extend(["Chapter", str(ch + 1), "."])
        for qi in block:
            c = speakers[qi]
            qtype = (EXPLICIT, ANAPHORIC, IMPLICIT)[int(rng.choice(3, p=spec.type_probs))]
            words = utterance(rng, styles[cast_styles[c]], vocab, spec.n_content, spec.marker_prob).split()
            name_first = qtype == EXPLICIT and rng.random() < spec.name_first_prob
            if qtype != EXPLICIT:
                narrative(c)
            elif name_first:
                mention(c)
                toks.extend(["said", ","])
            q0 = len(toks)
            toks.extend(['"', *words, '"'])
            quotes.append({"id": f"q{qi:04d}", "start_tok": q0, "end_tok": len(toks) - 1,
                           "type": qtype, "speaker_id": ids[c], "chapter": ch})
            if qtype == EXPLICIT and not name_first:
                toks.append("said")
                mention(c)
                toks.append(".")
            elif qtype == ANAPHORIC:
                mentions.append({"start_tok": len(toks), "end_tok": len(toks), "entity_id": None})
                toks.extend(["they", "said", "."])
        chapters.append({"start_tok": start, "end_tok": len(toks) - 1})
    quotes.sort(key=lambda q: q["start_tok"])
    annotation = {
        "characters": [{"id": i, "name": n} for i, n in zip(ids, names)],
        "chapters": chapters, "quotes": quotes, "mentions": mentions,
    }
    return build_novel(f"novel{index:03d}", " ".join(toks), annotation)


def generate_novels(spec: NovelSpec = NovelSpec(), seed: int = 0) -> list[AnnotatedNovel]:
    styles = archetypes(spec.n_archetypes, seed=seed, punct_peak=spec.punct_peak)
    return [generate_novel(spec, seed, i, styles) for i in range(spec.n_novels)]
