"""Experiment designs: budget sweeps, the precision robustness exercise, timing ratios."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .active import LoopConfig, NoPositiveSeedError, run_calibration, surrogate_scores
from .labelers import Labeler, make_labeler
from .metrics import (
    UndefinedMetricError,
    confusion_from_labels,
    f1_score,
    mse,
    precision,
    recall_tpr,
    write_metric_rows,
)
from .sampling import draw_pool
from .surrogate import model_output


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    model: str
    kind: str = "binary"
    budgets: tuple = (250, 500, 1000)
    repetitions: int = 10
    oos_size: int = 2000
    oos_seed: int = 12345
    seed: int = 0
    n_seed: int = 35
    pool_size: int = 20000
    pool_scheme: str = "sobol"
    refresh_pool: bool = False
    c: float = 1.0
    hpo_trials: int = 25
    hpo_trials_late: int = 10
    hpo_late_after: int = 5
    hpo_folds: int = 3
    # robustness exercise
    mc_size: int = 1
    families: tuple = ("boosted", "logit")
    platt: bool = True
    labeler_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in ("bh", "islands", "synthetic"):
            raise ValueError(f"unknown model id {self.model!r}")
        if not self.budgets or list(self.budgets) != sorted(set(self.budgets)):
            raise ValueError("budgets must be non-empty, distinct and ascending")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.oos_size < 1:
            raise ValueError("oos_size must be >= 1")

    def labeler(self, **extra) -> Labeler:
        opts = dict(self.labeler_options)
        opts.update(extra)
        return make_labeler(self.model, kind=self.kind, **opts)

    def loop_config(self, budget: int, repetition: int, **extra) -> LoopConfig:
        values = dict(
            budget=budget,
            n_seed=self.n_seed,
            pool_size=max(self.pool_size, budget + 1),
            pool_scheme=self.pool_scheme,
            refresh_pool=self.refresh_pool,
            c=self.c,
            hpo_trials=self.hpo_trials,
            hpo_trials_late=self.hpo_trials_late,
            hpo_late_after=self.hpo_late_after,
            hpo_folds=self.hpo_folds,
            sampler_seed=self.seed * 1_000_003 + repetition,
            surrogate_seed=self.seed * 1_000_003 + 7919 * budget + repetition,
        )
        values.update(extra)
        return LoopConfig(**values)


def ci95(values) -> tuple[float, float, float, float]:
    """(mean, lower, upper, median) with a normal-approximation interval."""
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if len(v) == 0:
        return (math.nan,) * 4
    mean = float(v.mean())
    half = 1.96 * float(v.std(ddof=1)) / math.sqrt(len(v)) if len(v) > 1 else math.nan
    return mean, mean - half, mean + half, float(np.median(v))


def _plan_hash(plan: ExperimentPlan) -> str:
    keep = {k: v for k, v in asdict(plan).items() if k in ("model", "kind", "oos_size", "oos_seed", "labeler_options")}
    return hashlib.sha256(json.dumps(keep, sort_keys=True, default=str).encode()).hexdigest()[:16]


def oos_labels(plan: ExperimentPlan, labeler: Labeler, out_dir, jobs: int = 1):
    """Fixed out-of-sample pool and its true labels, cached in ``out_dir``.

    Returns ``(pool, labels, abm_seconds)``; ``abm_seconds`` is the wall
    time of the labeling that built the cache.
    """
    cache = Path(out_dir) / "oos_labels.csv"
    meta = Path(out_dir) / "oos_meta.json"
    pool = draw_pool(labeler.space, plan.oos_size, "uniform", plan.oos_seed)
    key = _plan_hash(plan)
    if cache.exists() and meta.exists():
        info = json.loads(meta.read_text())
        if info.get("key") == key:
            with open(cache, newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            return pool, np.array([float(r[1]) for r in rows]), float(info["abm_seconds"])
    t0 = time.perf_counter()
    labels = labeler.label_many(pool, jobs)
    elapsed = time.perf_counter() - t0
    with open(cache, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label_value"])
        for i, v in enumerate(labels):
            w.writerow([i, repr(float(v))])
    meta.write_text(json.dumps({"key": key, "abm_seconds": elapsed}, indent=1) + "\n")
    return pool, labels, elapsed


def _safe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def score_surrogate(model, pool, truth, positive) -> dict:
    """F1/TPR/precision for classifiers, MSE/TPR for regressors."""
    mask, _ = surrogate_scores(model, pool, positive)
    true_pos = positive.contains(truth)
    c = confusion_from_labels(mask.astype(int), true_pos.astype(int))
    out = {"tpr": _safe(recall_tpr, c), "precision": _safe(precision, c), "f1": _safe(f1_score, c)}
    if positive.kind == "real":
        out = {"mse": mse(model_output(model, pool), truth), "tpr": out["tpr"], "precision": out["precision"]}
    return out


def _sweep_cell(args):
    plan, budget, rep, pool, truth = args
    labeler = plan.labeler()
    cfg = plan.loop_config(budget, rep)
    t0 = time.perf_counter()
    try:
        run = run_calibration(labeler, cfg)
    except NoPositiveSeedError as exc:
        return budget, rep, None, {"error": str(exc)}
    train = time.perf_counter() - t0
    t1 = time.perf_counter()
    scores = score_surrogate(run.model, pool, truth, labeler.positive)
    predict_s = time.perf_counter() - t1
    return budget, rep, scores, {"loop_seconds": train, "predict_seconds": predict_s}


def run_sweep(plan: ExperimentPlan, out_dir, jobs: int = 1, log=None) -> dict:
    """Score final surrogates on the fixed OOS pool for every (budget, repetition).

    Writes ``metrics.csv`` (budget,repetition,metric,value), ``summary.csv``
    (mean, 95% CI and median per budget and metric), ``timing.csv`` and a
    ``manifest.json``.  Returns the summary as a nested dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labeler = plan.labeler()
    pool, truth, abm_seconds = oos_labels(plan, labeler, out, jobs)
    cells = [(plan, b, r, pool, truth) for b in plan.budgets for r in range(plan.repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_cell, cells))
    else:
        results = []
        for cell in cells:
            results.append(_sweep_cell(cell))
            if log is not None:
                log(f"{plan.name}: budget {cell[1]} repetition {cell[2]} done")

    metric_names = ["f1", "tpr", "precision"] if plan.kind == "binary" else ["mse", "tpr", "precision"]
    rows, timing = [], []
    for budget, rep, scores, info in results:
        for m in metric_names:
            rows.append((budget, rep, m, None if scores is None else scores.get(m)))
        timing.append((budget, rep, info))
    write_metric_rows(out / "metrics.csv", rows)

    summary = {}
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "metric", "n", "mean", "ci_low", "ci_high", "median"])
        for b in plan.budgets:
            for m in metric_names:
                vals = [v for bb, _, mm, v in rows if bb == b and mm == m and v is not None]
                mean, lo, hi, med = ci95(vals)
                summary.setdefault(b, {})[m] = {"n": len(vals), "mean": mean, "ci_low": lo, "ci_high": hi, "median": med}
                w.writerow([b, m, len(vals), *(repr(float(x)) for x in (mean, lo, hi, med))])

    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "repetition", "loop_seconds", "predict_seconds", "abm_seconds_oos", "error"])
        for b, r, info in timing:
            w.writerow([b, r, info.get("loop_seconds", ""), info.get("predict_seconds", ""), abm_seconds,
                        info.get("error", "")])
    write_manifest(out, plan, "sweep")
    return summary


def write_manifest(out: Path, plan: ExperimentPlan, design: str) -> None:
    doc = {
        "design": design,
        "plan": asdict(plan),
        "versions": {
            "abmsurrogate": __version__,
            "numpy": np.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
    }
    with open(out / "manifest.json", "w", newline="\n") as fh:
        json.dump(doc, fh, indent=1, default=list)
        fh.write("\n")


@dataclass
class RobustnessResult:
    surrogate: str
    repetition: int
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float | None


def active_confusion(run, positive, probabilities):
    """Confusion of pre-evaluation predictions on points chosen in active rounds."""
    active = run.rounds_of > 0
    truth = positive.contains(run.y[active]).astype(int)
    p = np.asarray(probabilities)[active]
    return confusion_from_labels((p > 0.5).astype(int), truth)


def _robustness_rep(args):
    plan, rep = args
    budget = plan.budgets[-1]
    labeler = plan.labeler(mode="growth_only", mc_size=plan.mc_size) if plan.model == "islands" else plan.labeler()
    results = []
    for family in plan.families:
        cfg = plan.loop_config(budget, rep, family=family, platt=plan.platt and family == "boosted")
        try:
            run = run_calibration(labeler, cfg)
        except NoPositiveSeedError:
            results.append(RobustnessResult(family, rep, 0, 0, 0, 0, None))
            continue
        variants = [(family, run.pre_prob)]
        if family == "boosted" and plan.platt:
            # rounds without enough positives for Platt keep the raw output
            platt = np.where(np.isnan(run.pre_platt), run.pre_prob, run.pre_platt)
            variants = [("boosted_raw", run.pre_prob), ("boosted_platt", platt)]
        for name, probs in variants:
            c = active_confusion(run, labeler.positive, probs)
            results.append(RobustnessResult(name, rep, c.tp, c.fp, c.fn, c.tn, _safe(precision, c)))
    return results


def run_robustness(plan: ExperimentPlan, out_dir, jobs: int = 1, log=None) -> dict:
    """Precision of boosted (raw and Platt-scaled) and logit surrogates.

    The surrogate that picked each point is scored on that point before it
    was evaluated.  The loop uses ``plan.budgets[-1]`` and a pool of
    ``plan.pool_size`` points; Islands labels average growth over
    ``plan.mc_size`` seeds.  Returns ``{surrogate: median precision}``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(plan, r) for r in range(plan.repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            nested = list(ex.map(_robustness_rep, tasks))
    else:
        nested = []
        for t in tasks:
            nested.append(_robustness_rep(t))
            if log is not None:
                log(f"{plan.name}: repetition {t[1]} done")
    results = [r for rep in nested for r in rep]
    with open(out / "robustness.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["surrogate", "repetition", "tp", "fp", "fn", "tn", "precision"])
        for r in results:
            w.writerow([r.surrogate, r.repetition, r.tp, r.fp, r.fn, r.tn,
                        "" if r.precision is None else repr(float(r.precision))])
    medians = {}
    for name in dict.fromkeys(r.surrogate for r in results):
        vals = [r.precision for r in results if r.surrogate == name and r.precision is not None]
        medians[name] = float(np.median(vals)) if vals else None
    write_manifest(out, plan, "robustness")
    return medians


def timing_ratio(labeler: Labeler, pool, model) -> tuple[float, float, float]:
    """(true-model seconds, surrogate seconds, ratio) over ``pool``, single core."""
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if len(pool) == 0:
        raise ValueError("timing needs a non-empty pool")
    t0 = time.perf_counter()
    for p in pool:
        labeler.safe_label(p)
    abm = time.perf_counter() - t0
    t1 = time.perf_counter()
    model_output(model, pool)
    sur = max(time.perf_counter() - t1, 1e-9)
    return abm, sur, abm / sur


__all__ = [
    "ExperimentPlan",
    "RobustnessResult",
    "active_confusion",
    "ci95",
    "oos_labels",
    "run_robustness",
    "run_sweep",
    "score_surrogate",
    "timing_ratio",
]
