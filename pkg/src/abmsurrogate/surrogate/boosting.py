"""Second-order gradient boosting of CART regression trees with exact greedy splits.

Trees are stored as dense ``(n_trees, max_nodes)`` arrays; ``feature == -1``
marks a leaf.  A row goes left when ``x[feature] < threshold``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .. import hashing as H
from ..hashing import uniform4

LOSSES = ("logistic", "squared")
MIN_GAIN = 1e-10
_LOGISTIC, _SQUARED = 0, 1


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int = 4
    min_child_weight: float = 1.0
    shrinkage: float = 0.1
    subsample: float = 1.0
    reg_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in (0, 1]")
        if self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("reg_lambda and min_child_weight must be non-negative")


@dataclass
class TreeEnsemble:
    loss: str
    base_score: float
    shrinkage: float
    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    calibrator: tuple[float, float] | None = None
    feature_names: tuple | None = None
    loss_path: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    def node_counts(self) -> np.ndarray:
        return (self.left >= 0).sum(axis=1) * 2 + 1

    def to_json(self) -> str:
        trees = []
        for t in range(self.n_trees):
            k = int(self.node_counts()[t])
            trees.append({
                "feature": self.feature[t, :k].tolist(),
                "threshold": self.threshold[t, :k].tolist(),
                "left": self.left[t, :k].tolist(),
                "right": self.right[t, :k].tolist(),
                "value": self.value[t, :k].tolist(),
                "gain": self.gain[t, :k].tolist(),
            })
        doc = {
            "format": "abmsurrogate.tree_ensemble/1",
            "loss": self.loss,
            "base_score": self.base_score,
            "shrinkage": self.shrinkage,
            "n_features": self.n_features,
            "calibrator": list(self.calibrator) if self.calibrator is not None else None,
            "feature_names": list(self.feature_names) if self.feature_names is not None else None,
            "trees": trees,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsemble":
        doc = json.loads(text)
        trees = doc["trees"]
        width = max([len(t["feature"]) for t in trees], default=1)
        T = len(trees)
        arrays = {
            "feature": np.full((T, width), -1, np.int64),
            "threshold": np.zeros((T, width)),
            "left": np.full((T, width), -1, np.int64),
            "right": np.full((T, width), -1, np.int64),
            "value": np.zeros((T, width)),
            "gain": np.zeros((T, width)),
        }
        for i, tr in enumerate(trees):
            for name, arr in arrays.items():
                arr[i, : len(tr[name])] = tr[name]
        cal = doc.get("calibrator")
        return cls(
            loss=doc["loss"],
            base_score=float(doc["base_score"]),
            shrinkage=float(doc["shrinkage"]),
            n_features=int(doc["n_features"]),
            calibrator=tuple(cal) if cal is not None else None,
            feature_names=tuple(doc["feature_names"]) if doc.get("feature_names") else None,
            **arrays,
        )

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        with open(path) as fh:
            return cls.from_json(fh.read())


@njit(cache=True)
def _grad_hess(y, margin, loss, g, h):
    for r in range(y.shape[0]):
        if loss == _LOGISTIC:
            p = 1.0 / (1.0 + math.exp(-margin[r]))
            g[r] = p - y[r]
            hh = p * (1.0 - p)
            h[r] = hh if hh > 1e-16 else 1e-16
        else:
            g[r] = margin[r] - y[r]
            h[r] = 1.0


@njit(cache=True)
def _loss_value(y, margin, loss):
    total = 0.0
    for r in range(y.shape[0]):
        m = margin[r]
        if loss == _LOGISTIC:
            # log(1 + exp(m)) - y m, computed stably
            if m > 0:
                total += m + math.log1p(math.exp(-m)) - y[r] * m
            else:
                total += math.log1p(math.exp(m)) - y[r] * m
        else:
            total += 0.5 * (m - y[r]) ** 2
    return total


@njit(cache=True)
def _node_split(X, g, h, sidx, start, end, mcw, lam, min_gain, search):
    """Best (gain, feature, threshold) over rows ``sidx[:, start:end]``."""
    d = X.shape[1] if search else 0
    G = 0.0
    Hs = 0.0
    for p in range(start, end):
        r = sidx[0, p]
        G += g[r]
        Hs += h[r]
    parent = G * G / (Hs + lam) if Hs + lam > 0 else 0.0
    best_gain = min_gain
    best_f = -1
    best_thr = 0.0
    for f in range(d):
        GL = 0.0
        HL = 0.0
        for p in range(start, end - 1):
            r = sidx[f, p]
            GL += g[r]
            HL += h[r]
            xv = X[r, f]
            xn = X[sidx[f, p + 1], f]
            if not xn > xv:
                continue
            HR = Hs - HL
            if HL < mcw or HR < mcw or HL + lam <= 0 or HR + lam <= 0:
                continue
            GR = G - GL
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                mid = 0.5 * (xv + xn)
                best_thr = mid if mid > xv else xn
    return best_gain, best_f, best_thr, G, Hs


@njit(cache=True)
def _grow_tree(X, g, h, sidx, n_rows, max_depth, mcw, lam, min_gain,
               feat, thr, left, right, value, gain_out, goes_left, buf):
    d = X.shape[1]
    max_nodes = feat.shape[0]
    st_node = np.zeros(max_nodes, np.int64)
    st_start = np.zeros(max_nodes, np.int64)
    st_end = np.zeros(max_nodes, np.int64)
    st_depth = np.zeros(max_nodes, np.int64)
    top = 0
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n_rows, 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, start, end, depth = st_node[top], st_start[top], st_end[top], st_depth[top]
        bg, bf, bt, G, Hs = _node_split(X, g, h, sidx, start, end, mcw, lam, min_gain, depth < max_depth)
        if bf < 0:
            feat[node] = -1
            value[node] = -G / (Hs + lam) if Hs + lam > 0 else 0.0
            continue
        for p in range(start, end):
            r = sidx[0, p]
            goes_left[r] = X[r, bf] < bt
        nl = 0
        for f in range(d):
            a = start
            b = 0
            for p in range(start, end):
                r = sidx[f, p]
                if goes_left[r]:
                    sidx[f, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for q in range(b):
                sidx[f, a + q] = buf[q]
            nl = a - start
        lc, rc = n_nodes, n_nodes + 1
        n_nodes += 2
        feat[node], thr[node], left[node], right[node], gain_out[node] = bf, bt, lc, rc, bg
        st_node[top], st_start[top], st_end[top], st_depth[top] = rc, start + nl, end, depth + 1
        top += 1
        st_node[top], st_start[top], st_end[top], st_depth[top] = lc, start, start + nl, depth + 1
        top += 1
    return n_nodes


@njit(cache=True)
def _tree_value(x, feat, thr, left, right, value):
    node = 0
    while feat[node] >= 0:
        node = left[node] if x[feat[node]] < thr[node] else right[node]
    return value[node]


@njit(cache=True)
def _boost(X, y, order, loss, base, n_trees, max_depth, mcw, lam, eta, subsample, seed, min_gain,
           feat, thr, left, right, value, gain, loss_path):
    n, d = X.shape
    margin = np.full(n, base)
    g = np.zeros(n)
    h = np.zeros(n)
    # unsigned row ids keep numba from adding wraparound checks on g[r], X[r, f]
    sidx = np.zeros((d, n), np.uint64)
    goes_left = np.zeros(n, np.bool_)
    buf = np.zeros(n, np.uint64)
    keep = np.ones(n, np.bool_)
    loss_path[0] = _loss_value(y, margin, loss)
    for t in range(n_trees):
        _grad_hess(y, margin, loss, g, h)
        if subsample < 1.0:
            for r in range(n):
                keep[r] = uniform4(seed, H.SUBSAMPLE, t, r) < subsample
        n_rows = 0
        for f in range(d):
            k = 0
            for p in range(n):
                r = order[f, p]
                if keep[r]:
                    sidx[f, k] = r
                    k += 1
            n_rows = k
        if n_rows == 0:
            feat[t, 0] = -1
            value[t, 0] = 0.0
        else:
            _grow_tree(X, g, h, sidx, n_rows, max_depth, mcw, lam, min_gain,
                       feat[t], thr[t], left[t], right[t], value[t], gain[t], goes_left, buf)
        for r in range(n):
            margin[r] += eta * _tree_value(X[r], feat[t], thr[t], left[t], right[t], value[t])
        loss_path[t + 1] = _loss_value(y, margin, loss)


@njit(cache=True)
def _tree_depths(feat, left, right):
    T, M = feat.shape
    depths = np.zeros(T, np.int64)
    level = np.zeros(M, np.int64)
    for t in range(T):
        best = 0
        for node in range(M):
            # children are allocated after their parent
            if feat[t, node] >= 0:
                level[left[t, node]] = level[node] + 1
                level[right[t, node]] = level[node] + 1
                if level[node] + 1 > best:
                    best = level[node] + 1
        level[:] = 0
        depths[t] = best
    return depths


@njit(cache=True)
def _predict_margin(X, feat, thr, left, right, value, base, eta):
    # Leaves become self-loops with an infinite threshold, so every row takes
    # exactly depth(t) steps per tree, advanced level by level over all rows.
    # Unsigned indices spare numba's negative-index wraparound in the hot loop.
    # Trees are visited in order, so per-row sums match the training margins.
    n, d = X.shape
    T, M = feat.shape
    depths = _tree_depths(feat, left, right)
    f2 = np.empty(M, np.uint64)
    t2 = np.empty(M)
    child = np.empty(2 * M, np.uint64)
    nodes = np.zeros(n, np.uint64)
    out = np.full(n, base)
    Xf = X.ravel()
    ud = np.uint64(d)
    two = np.uint64(2)
    for t in range(T):
        for node in range(M):
            if feat[t, node] >= 0:
                f2[node] = feat[t, node]
                t2[node] = thr[t, node]
                child[2 * node] = left[t, node]
                child[2 * node + 1] = right[t, node]
            else:
                f2[node] = 0
                t2[node] = np.inf
                child[2 * node] = node
                child[2 * node + 1] = node
        nodes[:] = 0
        for _ in range(depths[t]):
            for r in range(n):
                a = nodes[r]
                go_right = Xf[np.uint64(r) * ud + f2[a]] >= t2[a]
                nodes[r] = child[two * a + np.uint64(go_right)]
        vt = value[t]
        for r in range(n):
            out[r] += eta * vt[nodes[r]]
    return out


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) and y (n,)")
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("features and labels must be finite")
    return X, y


def base_score_for(y: np.ndarray, loss: str) -> float:
    """Starting margin: the label mean for squared loss.

    Classifiers start at margin 0 (probability 1/2), where every row has the
    largest hessian, so ``min_child_weight`` does not stop the first trees
    from isolating a handful of rare positives.  Single-class data gets the
    clipped log-odds instead, since no tree will be fitted.
    """
    if loss == "squared":
        return float(np.mean(y))
    if np.all(y == y[0]):
        rate = min(max(float(y[0]), 1e-6), 1.0 - 1e-6)
        return math.log(rate / (1.0 - rate))
    return 0.0


def fit_boosted(X, y, hp: Hyperparams = Hyperparams(), loss: str = "logistic") -> TreeEnsemble:
    """Fit a boosted ensemble; deterministic in ``(X, y, hp)``."""
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    X, y = _check_xy(X, y)
    if loss == "logistic" and not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic loss needs 0/1 labels")
    n, d = X.shape
    base = base_score_for(y, loss)
    if np.all(y == y[0]):
        T, M = 0, 1
    else:
        T, M = hp.n_trees, 2 ** (hp.max_depth + 1) - 1
    feat = np.full((T, M), -1, np.int64)
    thr = np.zeros((T, M))
    left = np.full((T, M), -1, np.int64)
    right = np.full((T, M), -1, np.int64)
    value = np.zeros((T, M))
    gain = np.zeros((T, M))
    loss_path = np.zeros(T + 1)
    if T:
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.uint64))
        _boost(X, y, order, _LOGISTIC if loss == "logistic" else _SQUARED, base, T, hp.max_depth,
               float(hp.min_child_weight), float(hp.reg_lambda), float(hp.shrinkage), float(hp.subsample),
               int(hp.seed), MIN_GAIN, feat, thr, left, right, value, gain, loss_path)
        # nodes are allocated in order, so the used prefix is all prediction needs
        width = int(((left >= 0).sum(axis=1) * 2 + 1).max())
        feat, thr, left, right, value, gain = (a[:, :width].copy() for a in (feat, thr, left, right, value, gain))
    else:
        loss_path[0] = _loss_value(y, np.full(n, base), _LOGISTIC if loss == "logistic" else _SQUARED)
    return TreeEnsemble(loss, base, float(hp.shrinkage), d, feat, thr, left, right, value, gain,
                        loss_path=loss_path)


def predict_margin(model: TreeEnsemble, X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if X.shape[0] == 0:
        return np.zeros(0)
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    return _predict_margin(X, model.feature, model.threshold, model.left, model.right,
                           model.value, model.base_score, model.shrinkage)


def predict(model: TreeEnsemble, X) -> np.ndarray:
    """Regression values, or positive-class probabilities for logistic loss."""
    m = predict_margin(model, X)
    if model.loss == "squared":
        return m
    if model.calibrator is not None:
        A, B = model.calibrator
        return _sigmoid(-(A * m + B))
    return _sigmoid(m)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def importance(model: TreeEnsemble) -> np.ndarray:
    """Share of internal nodes splitting on each feature."""
    f = model.feature[model.feature >= 0]
    if f.size == 0:
        raise ValueError("ensemble has no splits")
    counts = np.bincount(f, minlength=model.n_features).astype(float)
    return counts / counts.sum()


def with_calibrator(model: TreeEnsemble, A: float, B: float) -> TreeEnsemble:
    if model.loss != "logistic":
        raise ValueError("only classification ensembles take a probability calibrator")
    d = asdict(model)
    d.pop("loss_path")
    d["calibrator"] = (float(A), float(B))
    return TreeEnsemble(**d)
