"""Random-search hyperparameter optimisation with k-fold cross-validation."""
from __future__ import annotations

import math

import numpy as np

from ..metrics import confusion_from_labels, f1_score, mse
from .boosting import Hyperparams, fit_boosted, predict, predict_margin

# Search grid: n_trees and max_depth integer-uniform, shrinkage log-uniform,
# the rest uniform.
GRID = {
    "n_trees": (50, 500),
    "max_depth": (2, 8),
    "shrinkage": (0.02, 0.3),
    "min_child_weight": (1.0, 10.0),
    "subsample": (0.6, 1.0),
    "reg_lambda": (0.0, 10.0),
}
MIN_CAPACITY = Hyperparams(n_trees=50, max_depth=2, shrinkage=0.02, min_child_weight=10.0,
                           subsample=1.0, reg_lambda=10.0)


class FoldError(ValueError):
    pass


def sample_hyperparams(rng: np.random.Generator) -> Hyperparams:
    lo, hi = GRID["shrinkage"]
    return Hyperparams(
        n_trees=int(rng.integers(GRID["n_trees"][0], GRID["n_trees"][1] + 1)),
        max_depth=int(rng.integers(GRID["max_depth"][0], GRID["max_depth"][1] + 1)),
        shrinkage=float(math.exp(rng.uniform(math.log(lo), math.log(hi)))),
        min_child_weight=float(rng.uniform(*GRID["min_child_weight"])),
        subsample=float(rng.uniform(*GRID["subsample"])),
        reg_lambda=float(rng.uniform(*GRID["reg_lambda"])),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def kfold_indices(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[k::folds] for k in range(folds)]


def stratified_indices(y: np.ndarray, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    out = [[] for _ in range(folds)]
    offset = 0
    for cls in (1, 0):
        members = rng.permutation(np.flatnonzero(y == cls))
        for i, idx in enumerate(members):
            out[(offset + i) % folds].append(idx)
        offset += len(members)
    return [np.sort(np.array(f, dtype=np.int64)) for f in out]


def _folds_ok(y, folds_idx) -> bool:
    n = len(y)
    for val in folds_idx:
        mask = np.zeros(n, bool)
        mask[val] = True
        for part in (y[mask], y[~mask]):
            if part.size == 0 or part.min() == part.max():
                return False
    return True


def make_folds(y, folds: int, objective: str, rng: np.random.Generator) -> list[np.ndarray]:
    idx = kfold_indices(len(y), folds, rng)
    if objective != "f1" or _folds_ok(y, idx):
        return idx
    idx = stratified_indices(y, folds, rng)
    if not _folds_ok(y, idx):
        raise FoldError("cannot build folds holding both classes")
    return idx


def cv_score(X, y, hp: Hyperparams, folds_idx, objective: str) -> float:
    """Pooled out-of-fold F1 (higher is better) or MSE (lower is better)."""
    loss = "logistic" if objective == "f1" else "squared"
    oof = np.empty(len(y))
    n = len(y)
    for val in folds_idx:
        train = np.ones(n, bool)
        train[val] = False
        model = fit_boosted(X[train], y[train], hp, loss)
        oof[val] = predict(model, X[val])
    if objective == "f1":
        return f1_score(confusion_from_labels((oof > 0.5).astype(int), y.astype(int)))
    return mse(oof, y)


def out_of_fold_margins(X, y, hp: Hyperparams, folds: int, seed: int) -> np.ndarray:
    """Logistic margins predicted for each row by a model that never saw it."""
    rng = np.random.default_rng(seed)
    folds_idx = make_folds(y, folds, "f1", rng)
    out = np.empty(len(y))
    for val in folds_idx:
        train = np.ones(len(y), bool)
        train[val] = False
        out[val] = predict_margin(fit_boosted(X[train], y[train], hp, "logistic"), X[val])
    return out


def tune(X, y, trials: int = 25, folds: int = 3, objective: str = "f1", seed: int = 0) -> Hyperparams:
    """Best of ``trials`` random configurations by cross-validated objective.

    Ties go to fewer trees, then shallower trees.
    """
    if objective not in ("f1", "mse"):
        raise ValueError(f"unknown objective {objective!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if trials < 1 or folds < 2:
        raise ValueError("need trials >= 1 and folds >= 2")
    if len(y) < 2 * folds:
        raise ValueError("too few samples for the requested folds")
    rng = np.random.default_rng(seed)
    folds_idx = make_folds(y, folds, objective, rng)
    best_key, best_hp = None, None
    for _ in range(trials):
        hp = sample_hyperparams(rng)
        score = cv_score(X, y, hp, folds_idx, objective)
        key = (-score if objective == "f1" else score, hp.n_trees, hp.max_depth)
        if best_key is None or key < best_key:
            best_key, best_hp = key, hp
    return best_hp
