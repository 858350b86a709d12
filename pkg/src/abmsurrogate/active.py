"""Budgeted pool-based active learning of a calibration surrogate.

One run: evaluate a quasi-random seed set (extended until it holds a
positive), then repeat {tune and fit the surrogate, predict the pool, pick a
batch, evaluate it on the true model} until the evaluation budget is spent.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .labelers import Labeler
from .sampling import draw_pool, scale_to_space, sobol_unit
from .surrogate import (
    FoldError,
    Hyperparams,
    LogitModel,
    apply_platt,
    fit_boosted,
    fit_logit,
    platt_calibrate,
    predict,
    predict_margin,
    save_model,
    tune,
)
from .surrogate.tuning import out_of_fold_margins

POSITIVE_SAMPLING = "positive-sampling"
ENTROPY_FALLBACK = "entropy-fallback"
SEED = "seed"


class NoPositiveSeedError(RuntimeError):
    def __init__(self, evaluated: int, cap: int):
        super().__init__(f"no positive seed found: {evaluated} seed evaluations (cap {cap}) all negative")
        self.evaluated = evaluated
        self.cap = cap


def _sub_seed(*parts) -> int:
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


@dataclass(frozen=True)
class LoopConfig:
    budget: int
    n_seed: int = 35
    pool_size: int = 20000
    batch_size: int | None = None  # default ceil(c * ln(budget))
    c: float = 1.0
    pool_scheme: str = "sobol"
    refresh_pool: bool = False
    family: str = "boosted"
    hpo_trials: int = 25
    hpo_trials_late: int = 10
    hpo_late_after: int = 5
    hpo_folds: int = 3
    platt: bool = False
    sampler_seed: int = 0
    surrogate_seed: int = 0

    def __post_init__(self):
        if self.n_seed < 1:
            raise ValueError("n_seed must be >= 1")
        if self.budget < self.n_seed:
            raise ValueError(f"budget ({self.budget}) must be at least n_seed ({self.n_seed})")
        if self.pool_size <= self.budget:
            raise ValueError(f"pool_size ({self.pool_size}) must exceed budget ({self.budget})")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.family not in ("boosted", "logit"):
            raise ValueError(f"unknown surrogate family {self.family!r}")
        if self.pool_scheme not in ("sobol", "uniform"):
            raise ValueError(f"unknown pool scheme {self.pool_scheme!r}")
        if min(self.hpo_trials, self.hpo_trials_late) < 1 or self.hpo_folds < 2:
            raise ValueError("need at least one HPO trial and two folds")

    @property
    def batch(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return max(1, math.ceil(self.c * math.log(self.budget)))

    @property
    def seed_cap(self) -> int:
        return max(self.n_seed, self.budget // 2)


@dataclass
class RoundLog:
    round: int
    mode: str
    batch: list
    n_labeled: int
    n_predicted_positive: int
    n_true_positive_in_batch: int
    hyperparams: dict | None


@dataclass
class CalibrationRun:
    config: LoopConfig
    names: list
    kind: str
    X: np.ndarray
    y: np.ndarray
    rounds_of: np.ndarray
    modes: list
    seed_evaluations: int
    rounds: list
    model: object
    # pre-evaluation outputs of the surrogate that selected each point
    pre_prob: np.ndarray = field(default=None)
    pre_platt: np.ndarray = field(default=None)
    pool_remaining: int = 0

    @property
    def evaluations(self) -> int:
        return len(self.y)

    def summary(self) -> dict:
        return {
            "config": asdict(self.config),
            "label_kind": self.kind,
            "dimensions": list(self.names),
            "evaluations": self.evaluations,
            "seed_evaluations": self.seed_evaluations,
            "active_rounds": len(self.rounds),
            "batch_size": self.config.batch,
            "rounds": [asdict(r) for r in self.rounds],
        }

    def write(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "run.json", "w", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=1)
        with open(out / "samples.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", *self.names, "label_kind", "label_value", "selection_mode"])
            for r, x, v, m in zip(self.rounds_of, self.X, self.y, self.modes):
                w.writerow([int(r), *(repr(float(c)) for c in x), self.kind, repr(float(v)), m])
        save_model(self.model, out / "model.json")
        return out


def seed_points(space, n: int, sampler_seed: int) -> np.ndarray:
    """First ``n`` points of the seed-set Sobol stream (disjoint shift from the pool)."""
    unit = sobol_unit(len(space), n, skip=1, shift_seed=_sub_seed("seed-set", sampler_seed))
    return scale_to_space(unit, space)


def seed_round(labeler: Labeler, config: LoopConfig, jobs: int = 1):
    """Evaluate the seed set, extending it one point at a time until it holds a positive.

    Extras count against the budget; giving up after ``config.seed_cap``
    evaluations raises ``NoPositiveSeedError``.
    """
    cap = config.seed_cap
    pts = seed_points(labeler.space, cap, config.sampler_seed)
    y = list(labeler.label_many(pts[: config.n_seed], jobs))
    n = config.n_seed
    while not labeler.positive.contains(y).any():
        if n >= cap:
            raise NoPositiveSeedError(n, cap)
        y.append(labeler.safe_label(pts[n]))
        n += 1
    return pts[:n].copy(), np.array(y)


def binary_entropy(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log(p) + (1 - p) * np.log(1 - p))
    return np.nan_to_num(h, nan=0.0)


def select_batch(predicted_positive, probability, size: int, round_seed: int):
    """Indices to evaluate next and the selection mode.

    A uniform subset of predicted positives when there are any, otherwise
    the ``size`` points of highest predicted-label entropy (ties by index).
    """
    pos = np.flatnonzero(np.asarray(predicted_positive, dtype=bool))
    n = len(predicted_positive)
    if n == 0:
        raise ValueError("cannot select from an empty pool")
    if size < 1:
        raise ValueError("batch size must be >= 1")
    if len(pos):
        rng = np.random.default_rng(round_seed)
        take = min(size, len(pos))
        return np.sort(rng.choice(pos, size=take, replace=False)), POSITIVE_SAMPLING
    h = binary_entropy(probability)
    order = np.lexsort((np.arange(n), -h))
    return np.sort(order[: min(size, n)]), ENTROPY_FALLBACK


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))


def _dedup_key(row) -> bytes:
    return np.ascontiguousarray(row, dtype=np.float64).tobytes()


def _fit_surrogate(X, y, kind, config: LoopConfig, round_index: int):
    if config.family == "logit":
        if kind != "binary":
            raise ValueError("the logit baseline only handles binary labels")
        return fit_logit(X, y), None
    trials = config.hpo_trials if round_index <= config.hpo_late_after else config.hpo_trials_late
    objective = "f1" if kind == "binary" else "mse"
    tune_seed = _sub_seed("hpo", config.surrogate_seed, round_index)
    try:
        hp = tune(X, y, trials=trials, folds=config.hpo_folds, objective=objective, seed=tune_seed)
    except (FoldError, ValueError):
        # too few samples or positives for cross-validation
        hp = Hyperparams(seed=tune_seed % (2**31 - 1))
    loss = "logistic" if kind == "binary" else "squared"
    return fit_boosted(X, y, hp, loss), hp


def surrogate_scores(model, pool, positive):
    """(predicted-positive mask, positive-class probability) over ``pool``.

    Regressors turn the signed distance to the positive-set threshold into a
    pseudo-probability with a unit-scale logistic squash.
    """
    if len(pool) == 0:
        return np.zeros(0, bool), np.zeros(0)
    if isinstance(model, LogitModel):
        p = model.predict(pool)
        return p > 0.5, p
    if model.loss == "logistic":
        p = predict(model, pool)
        return p > 0.5, p
    v = predict(model, pool)
    return positive.contains(v), _sigmoid(positive.signed_distance(v))


def _platt_for_round(X, y, hp, seed):
    try:
        margins = out_of_fold_margins(X, y, hp, 3, seed)
        return platt_calibrate(margins, y)
    except (FoldError, ValueError):
        return None


def run_calibration(labeler: Labeler, config: LoopConfig, jobs: int = 1, log=None) -> CalibrationRun:
    space = labeler.space
    kind = labeler.kind
    positive = labeler.positive
    S = config.batch
    if config.family == "logit" and kind != "binary":
        raise ValueError("the logit baseline only handles binary labels")

    X, y = seed_round(labeler, config, jobs)
    n_seed_evals = len(y)
    rounds_of = [0] * len(y)
    modes = [SEED] * len(y)
    pre_prob = [math.nan] * len(y)
    pre_platt = [math.nan] * len(y)
    labeled = {_dedup_key(r) for r in X}

    def fresh_pool(r):
        seed = config.sampler_seed if r == 0 else _sub_seed("pool", config.sampler_seed, r)
        pts = draw_pool(space, config.pool_size, config.pool_scheme, seed)
        keep = np.array([_dedup_key(p) not in labeled for p in pts], dtype=bool)
        return pts[keep]

    pool = fresh_pool(0)
    logs = []
    model = None
    r = 0
    while len(y) < config.budget:
        r += 1
        model, hp = _fit_surrogate(X, y, kind, config, r)
        if config.refresh_pool and r > 1:
            pool = fresh_pool(r)
        if len(pool) == 0:
            raise RuntimeError("candidate pool exhausted before the budget was spent")
        mask, prob = surrogate_scores(model, pool, positive)
        size = min(S, config.budget - len(y))
        idx, mode = select_batch(mask, prob, size, _sub_seed("select", config.surrogate_seed, r))
        batch = pool[idx]

        platt_prob = np.full(len(idx), math.nan)
        if config.platt and hp is not None and kind == "binary":
            ab = _platt_for_round(X, y, hp, _sub_seed("platt", config.surrogate_seed, r))
            if ab is not None:
                platt_prob = apply_platt(predict_margin(model, batch), *ab)

        values = labeler.label_many(batch, jobs)
        X = np.vstack([X, batch])
        y = np.concatenate([y, values])
        rounds_of += [r] * len(idx)
        modes += [mode] * len(idx)
        pre_prob += list(prob[idx])
        pre_platt += list(platt_prob)
        labeled.update(_dedup_key(p) for p in batch)
        pool = np.delete(pool, idx, axis=0)

        logs.append(RoundLog(
            round=r,
            mode=mode,
            batch=[int(i) for i in idx],
            n_labeled=len(y),
            n_predicted_positive=int(mask.sum()),
            n_true_positive_in_batch=int(positive.contains(values).sum()),
            hyperparams=asdict(hp) if hp is not None else None,
        ))
        if log is not None:
            log(f"round {r}: {mode}, {len(idx)} evaluated, {len(y)}/{config.budget} labels")

    # final surrogate on everything evaluated
    model, _ = _fit_surrogate(X, y, kind, config, r + 1)
    if not isinstance(model, LogitModel):
        model.feature_names = tuple(space.names)
    return CalibrationRun(
        config=config,
        names=space.names,
        kind=kind,
        X=X,
        y=y,
        rounds_of=np.array(rounds_of, dtype=int),
        modes=modes,
        seed_evaluations=n_seed_evals,
        rounds=logs,
        model=model,
        pre_prob=np.array(pre_prob),
        pre_platt=np.array(pre_platt),
        pool_remaining=len(pool),
    )


def predict_positives(run_or_model, pool, positive):
    """Pool rows the surrogate predicts positive, with scores, best first.

    Returns ``(indices, scores)``; scores are probabilities for classifiers
    and predicted values for regressors (sorted toward the positive side).
    """
    model = run_or_model.model if isinstance(run_or_model, CalibrationRun) else run_or_model
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if pool.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    mask, prob = surrogate_scores(model, pool, positive)
    if isinstance(model, LogitModel) or model.loss == "logistic":
        score = prob
        rank = -prob
    else:
        score = predict(model, pool)
        rank = -positive.signed_distance(score)
    idx = np.flatnonzero(mask)
    order = idx[np.lexsort((idx, rank[idx]))]
    return order, score[order]
