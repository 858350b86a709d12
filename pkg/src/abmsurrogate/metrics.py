"""Scores for surrogate predictions.

Undefined scores (zero denominators) raise ``UndefinedMetricError`` instead
of returning 0, so that sweeps record them as missing cells.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_from_labels(pred_binary, true_binary) -> Confusion:
    p = np.asarray(pred_binary)
    t = np.asarray(true_binary)
    if p.shape != t.shape:
        raise ValueError("prediction and truth lengths differ")
    for arr in (p, t):
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("labels must be binary (0/1)")
    p = p.astype(bool)
    t = t.astype(bool)
    return Confusion(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)),
        tn=int(np.sum(~p & ~t)),
    )


def f1_score(c: Confusion) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        raise UndefinedMetricError("F1 undefined without positives or predicted positives")
    return 2 * c.tp / denom


def precision(c: Confusion) -> float:
    if c.tp + c.fp == 0:
        raise UndefinedMetricError("precision undefined without predicted positives")
    return c.tp / (c.tp + c.fp)


def recall_tpr(c: Confusion) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("TPR undefined without actual positives")
    return c.tp / (c.tp + c.fn)


def mse(pred, truth) -> float:
    a = np.asarray(pred, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("mse needs two non-empty sequences of equal length")
    return float(np.mean((a - b) ** 2))


def write_metric_rows(path, rows) -> None:
    """Rows of ``(budget, repetition, metric, value)``; missing values are empty cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "repetition", "metric", "value"])
        for budget, rep, metric, value in rows:
            w.writerow([budget, rep, metric, "" if value is None else repr(float(value))])
