"""Segmentation and vector-approximation metrics, reports and a k-fold driver."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import kfold_assignments
from .embeddings import cosine

_logger = logging.getLogger(__name__)

SEPARATOR = "#"


def _segments(x):
    """Accept a segment list or anything with ``.segments``."""
    return tuple(getattr(x, "segments", x))


def segmentation_accuracy(pred, gold, strict=False):
    """1 iff the predicted morpheme sequence equals the gold one.

    With ``strict`` both arguments must carry labels and they must match too.
    """
    if strict:
        return int(_segments(pred) == _segments(gold) and tuple(pred.labels) == tuple(gold.labels))
    return int(_segments(pred) == _segments(gold))


def morpheme_f1(pred, gold):
    p, g = set(_segments(pred)), set(_segments(gold))
    if not p and not g:
        return 1.0
    hit = len(p & g)
    if hit == 0:
        return 0.0
    precision, recall = hit / len(p), hit / len(g)
    return 2 * precision * recall / (precision + recall)


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def canonical_edit_distance(pred, gold):
    """Levenshtein distance between the '#'-joined segment strings."""
    pred, gold = _segments(pred), _segments(gold)
    for s in pred + gold:
        if SEPARATOR in s:
            raise ValueError(f"segment {s!r} contains the separator {SEPARATOR!r}")
    return levenshtein(SEPARATOR.join(pred), SEPARATOR.join(gold))


@dataclass
class SegEvalResult:
    accuracy: float
    morpheme_f1: float
    mean_edit: float
    records: list = field(default_factory=list)

    def metrics(self):
        return {"accuracy": self.accuracy, "f1": self.morpheme_f1, "edit": self.mean_edit}


def evaluate_segmentations(surfaces, preds, golds, strict=False):
    """Corpus-level segmentation metrics with one record per word."""
    if not len(preds) == len(golds) == len(surfaces):
        raise ValueError("surfaces, predictions and golds differ in length")
    records = []
    for w, p, g in zip(surfaces, preds, golds):
        records.append({"surface": w, "pred": str(p), "gold": str(g),
                        "accuracy": segmentation_accuracy(p, g, strict),
                        "f1": morpheme_f1(p, g), "edit": canonical_edit_distance(p, g)})
    n = max(len(records), 1)
    return SegEvalResult(sum(r["accuracy"] for r in records) / n,
                         sum(r["f1"] for r in records) / n,
                         sum(r["edit"] for r in records) / n, records)


def safe_cosine(pred, gold):
    c = cosine(pred, gold)
    return 0.0 if c is None else c


@dataclass
class VectorEvalResult:
    mean: float
    cosines: list
    groups: dict  # tag -> summary dict

    def boxplot_rows(self, tags):
        return [f"{t}\t{c:.6f}" for t, c in zip(tags, self.cosines)]


def vector_eval(preds, golds, tags=None):
    """Mean cosine overall and per affix tag, with quartile summaries per tag."""
    cos = [safe_cosine(p, g) for p, g in zip(preds, golds)]
    groups = {}
    if tags is not None:
        by_tag = {}
        for t, c in zip(tags, cos):
            by_tag.setdefault(t, []).append(c)
        for t in sorted(by_tag):
            arr = np.array(by_tag[t])
            q1, med, q3 = np.percentile(arr, [25, 50, 75])
            groups[t] = {"count": len(arr), "mean": float(arr.mean()), "min": float(arr.min()),
                         "q1": float(q1), "median": float(med), "q3": float(q3), "max": float(arr.max())}
    mean = float(np.mean(cos)) if cos else 0.0
    return VectorEvalResult(mean, cos, groups)


def outermost_affix(analysis):
    """Affix tag for the per-affix breakdown: last suffix, else first prefix, else 'none'."""
    labels, segs = analysis.labels, analysis.segments
    if labels[-1] == "suffix":
        return segs[-1]
    if labels[0] == "prefix":
        return segs[0]
    return "none"


def format_table(rows, columns, floatfmt="{:.4f}"):
    """Columnar plain-text table (tab-separated header then rows)."""
    lines = ["\t".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            x = row.get(c, "")
            cells.append(floatfmt.format(x) if isinstance(x, float) else str(x))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_records(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def mean_std(values):
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


def format_mean_std(values, digits=3):
    """``mean (std)`` with the leading zero dropped, e.g. ``.820 (.018)``."""
    m, s = mean_std(values)

    def f(x):
        t = f"{x:.{digits}f}"
        return t[1:] if t.startswith("0.") else t

    return f"{f(m)} ({f(s)})"


def cross_validate(records, run_fold, folds=10, seed=0, assignment_path=None):
    """Run ``run_fold(train, test, fold) -> {metric: value}`` on every fold.

    Returns ``(per_fold, summary)`` where ``summary`` maps each metric to
    ``(mean, std)``. Fold ids may be written to ``assignment_path``.
    """
    assign = kfold_assignments(len(records), folds, seed)
    if assignment_path:
        with open(assignment_path, "w", encoding="utf-8") as fh:
            for rec, f in zip(records, assign):
                fh.write(f"{rec.surface}\t{int(f)}\n")
    per_fold = []
    for k in range(folds):
        train = [r for r, f in zip(records, assign) if f != k]
        test = [r for r, f in zip(records, assign) if f == k]
        if not test:
            continue
        m = run_fold(train, test, k)
        _logger.info("fold %d: %s", k, m)
        per_fold.append(m)
    keys = sorted(per_fold[0]) if per_fold else []
    summary = {k: mean_std([m[k] for m in per_fold]) for k in keys}
    return per_fold, summary


def summary_table(summary):
    rows = [{"metric": k, "mean": m, "std": s} for k, (m, s) in summary.items()]
    return format_table(rows, ["metric", "mean", "std"])
