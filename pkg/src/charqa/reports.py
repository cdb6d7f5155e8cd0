"""CSV and aligned-text report tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .av_eval import CC, CQ, PLAY, SCENE
from .stats import CorpusStats

STATS_COLUMNS = ("segments", "utterances", "queries", "targets/query")
ACCURACY_COLUMNS = ("overall", "non-explicit", "explicit", "anaphoric", "implicit")
UNANSWERABLE_ROW = "unanswerable (%)"
PROTOCOL_ORDER = (SCENE, PLAY, CC, CQ)


@dataclass
class Table:
    """Header plus rows of already-formatted cells (``""`` marks an empty cell)."""
    columns: tuple[str, ...]
    rows: list[tuple[str, ...]] = field(default_factory=list)

    def add(self, *cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        self.rows.append(tuple(str(c) for c in cells))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned columns; the first is left-justified, the rest right-justified.
        Empty cells print as ``-``."""
        body = [tuple(c if c != "" else "-" for c in r) for r in self.rows]
        widths = [max(len(r[i]) for r in [self.columns, *body]) for i in range(len(self.columns))]

        def line(r):
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            return "  ".join(cells).rstrip()

        rule = "  ".join("-" * w for w in widths)
        return "\n".join([line(self.columns), rule, *(line(r) for r in body)]) + "\n"


def _num(x, digits: int = 1) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def stats_table(stats: CorpusStats) -> Table:
    """Corpus counts per split for one segmentation mode."""
    t = Table(("split", *STATS_COLUMNS))
    for r in stats.rows:
        t.add(r.split, r.segments, r.utterances, r.queries, _num(r.targets_per_query, 1))
    return t


def auc_table(reports: dict[str, dict]) -> Table:
    """``reports[model][protocol] -> AUCReport``; cells read ``mean (std)``."""
    seen = {p for by in reports.values() for p in by}
    protocols = [p for p in PROTOCOL_ORDER if p in seen] + sorted(seen - set(PROTOCOL_ORDER))
    t = Table(("model", *protocols))
    for model in reports:
        cells = []
        for p in protocols:
            r = reports[model].get(p)
            cells.append("" if r is None or math.isnan(r.mean) else f"{r.mean:.3f} ({r.std:.3f})")
        t.add(model, *cells)
    return t


def per_play_table(report, authors: dict[str, str] | None = None, titles: dict[str, str] | None = None) -> Table:
    """One row per play: title, author and mean AUC over its segments."""
    authors, titles = authors or {}, titles or {}
    t = Table(("play", "author", "auc"))
    for pid in sorted(report.per_play):
        t.add(titles.get(pid, pid), authors.get(pid, ""), _num(report.per_play[pid], 3))
    return t


def accuracy_table(tables: dict) -> Table:
    """``tables[system] -> AccuracyTable``; the unanswerable row is taken from
    the first system (it depends on the data, not on the scorer)."""
    t = Table(("system", *ACCURACY_COLUMNS))
    for name, acc in tables.items():
        t.add(name, *(_num(acc.accuracy.get(c)) for c in ACCURACY_COLUMNS))
    if tables:
        first = next(iter(tables.values()))
        t.add(UNANSWERABLE_ROW, *(_num(first.unanswerable.get(c)) for c in ACCURACY_COLUMNS))
    return t


def delta_table(base, other, base_name: str = "gold", other_name: str = "predicted") -> Table:
    """Accuracy of two systems and ``other - base`` per category."""
    t = Table(("system", *ACCURACY_COLUMNS))
    t.add(base_name, *(_num(base.accuracy.get(c)) for c in ACCURACY_COLUMNS))
    t.add(other_name, *(_num(other.accuracy.get(c)) for c in ACCURACY_COLUMNS))
    deltas = []
    for c in ACCURACY_COLUMNS:
        a, b = base.accuracy.get(c), other.accuracy.get(c)
        deltas.append("" if a is None or b is None else f"{b - a:+.1f}")
    t.add("delta", *deltas)
    return t
