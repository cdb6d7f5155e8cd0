"""Fixed inputs for the report golden files."""

from charqa.attribution import AccuracyTable
from charqa.av_eval import AUCReport
from charqa.stats import CorpusStats, SplitStats

GOLDEN_NAMES = ("stats.csv", "stats.txt", "accuracy.csv", "accuracy.txt", "delta.csv", "delta.txt",
                "auc.csv", "auc.txt")


def stats_fixture():
    return CorpusStats("scene", (
        SplitStats("train", 1507, 263270, 5392, 5.0),
        SplitStats("validation", 165, 27501, 601, 4.83),
        SplitStats("test", 183, 33190, 650, 4.96),
    ))


def _acc(overall, nonexp, exp, ana, imp, unans):
    cats = ("overall", "non-explicit", "explicit", "anaphoric", "implicit")
    return AccuracyTable(dict(zip(cats, (overall, nonexp, exp, ana, imp))),
                         dict(zip(cats, unans)), {c: 10 for c in cats}, ["n1"])


def accuracy_fixture():
    unans = (12.34, 20.0, 0.0, 15.55, 25.0)
    return {
        "context-only": _acc(78.5, 68.9, 98.6, 70.04, None, unans),
        "augmented-gold": _acc(80.25, 72.15, 98.6, 73.0, 71.3, unans),
        "augmented-predicted": _acc(80.0, 71.75, 98.6, 72.5, 71.0, unans),
    }


def auc_fixture():
    return {
        "random": {"scene": AUCReport("scene", mean=0.5012, std=0.0213),
                   "play": AUCReport("play", mean=0.4987, std=0.0188)},
        "feature": {"scene": AUCReport("scene", mean=0.823, std=0.0456)},
    }


def render_all():
    from charqa.reports import accuracy_table, auc_table, delta_table, stats_table
    acc = accuracy_fixture()
    tables = {
        "stats": stats_table(stats_fixture()),
        "accuracy": accuracy_table(acc),
        "delta": delta_table(acc["augmented-gold"], acc["augmented-predicted"]),
        "auc": auc_table(auc_fixture()),
    }
    out = {}
    for name, t in tables.items():
        out[f"{name}.csv"] = t.to_csv()
        out[f"{name}.txt"] = t.to_text()
    return out
